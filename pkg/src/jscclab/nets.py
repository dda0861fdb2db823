"""Network construction and forward semantics.

Three networks are described declaratively (so the FLOPs analyzer and the
shape checker share one source of truth) and executed on torch:

* a five-layer PReLU convolutional encoder whose first layer halves the
  resolution and whose last layer emits ``c`` feature maps,
* a U-Net-style generator/decoder with an internal downsample-upsample
  path and three concatenation skip links at matching resolutions,
* a five-layer patch discriminator scoring local real/fake patches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError, ContractError, ShapeError
from .runspec import RunSpec

LEAKY_SLOPE = 0.2
INIT_STD = 0.02

_ACTIVATIONS = ("prelu", "relu", "leaky_relu", "sigmoid", "none")
_KINDS = ("conv", "transposed_conv")


class PixelScale(str, Enum):
    PIXEL_255 = "pixel_255"
    UNIT = "unit"


@dataclass
class ImageBatch:
    """Batch of images with an explicit pixel-scale tag.

    ``data`` is (B, H, W, C); ``pixel_255`` batches lie in [0, 255] and
    ``unit`` batches in [0, 1].
    """

    data: torch.Tensor
    scale: PixelScale

    def __post_init__(self):
        self.scale = PixelScale(self.scale)
        if self.data.dim() != 4:
            raise ShapeError(f"image batch must be 4-D (B,H,W,C), got {tuple(self.data.shape)}")
        hi = 255.0 if self.scale is PixelScale.PIXEL_255 else 1.0
        lo, top = self.data.min().item(), self.data.max().item()
        if lo < 0 or top > hi:
            raise ContractError(
                f"{self.scale.value} batch out of range: [{lo}, {top}]")

    @classmethod
    def from_nchw(cls, t: torch.Tensor, scale: PixelScale) -> "ImageBatch":
        return cls(t.permute(0, 2, 3, 1), scale)

    def nchw(self) -> torch.Tensor:
        return self.data.permute(0, 3, 1, 2)

    def to_unit(self) -> "ImageBatch":
        if self.scale is PixelScale.UNIT:
            return self
        return ImageBatch(self.data.to(torch.float32) / 255.0, PixelScale.UNIT)

    def to_pixel255(self) -> "ImageBatch":
        if self.scale is PixelScale.PIXEL_255:
            return self
        return ImageBatch(self.data * 255.0, PixelScale.PIXEL_255)


@dataclass(frozen=True)
class LayerSpec:
    """One (transposed) convolutional layer: F x F kernel, K filters,
    (S_h, S_w) stride. ``skip_source`` names an earlier layer whose output
    is channel-concatenated onto this layer's input."""

    name: str
    kind: str
    kernel: int
    filters: int
    stride: tuple[int, int]
    activation: str
    skip_source: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"{self.name}: unknown layer kind {self.kind!r}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(f"{self.name}: unknown activation {self.activation!r}")
        if self.kernel < 1 or self.filters < 1 or min(self.stride) < 1:
            raise ConfigurationError(f"{self.name}: kernel/filters/stride must be >= 1")


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer stack plus input geometry and optional pixel scaling.

    ``pre_scale`` (1/255) turns pixel inputs into unit scale at the first
    layer; ``post_scale`` (255) is the factor for emitting pixel-scale
    images after the final sigmoid (losses consume the unit output).
    """

    name: str
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]  # (H, W, C)
    pre_scale: float | None = None
    post_scale: float | None = None

    def shape_chain(self) -> list[tuple[LayerSpec, tuple[int, int, int], tuple[int, int, int]]]:
        """Per-layer (spec, input HWC including skips, output HWC), validated."""
        h, w, ch = self.input_shape
        produced: dict[str, tuple[int, int, int]] = {}
        chain = []
        for layer in self.layers:
            in_ch = ch
            if layer.skip_source is not None:
                if layer.skip_source not in produced:
                    raise ConfigurationError(
                        f"{self.name}.{layer.name}: skip source {layer.skip_source!r} "
                        "is not an earlier layer")
                sh, sw, sc = produced[layer.skip_source]
                if (sh, sw) != (h, w):
                    raise ConfigurationError(
                        f"{self.name}.{layer.name}: skip source {layer.skip_source} "
                        f"is {sh}x{sw} but this layer's input is {h}x{w}")
                in_ch += sc
            s_h, s_w = layer.stride
            if layer.kind == "conv":
                oh, ow = math.ceil(h / s_h), math.ceil(w / s_w)
            else:
                oh, ow = h * s_h, w * s_w
            out = (oh, ow, layer.filters)
            chain.append((layer, (h, w, in_ch), out))
            produced[layer.name] = out
            h, w, ch = out
        return chain

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return self.shape_chain()[-1][2]

    def layer_output_shapes(self) -> dict[str, tuple[int, int, int]]:
        return {layer.name: out for layer, _, out in self.shape_chain()}


def build_encoder(spec: RunSpec) -> NetworkSpec:
    """Five PReLU conv layers; the 5x5 stride-2 head halves the resolution
    and the final 3x3 layer emits ``c`` feature maps."""
    if spec.encoder_channels < 1:
        raise ConfigurationError(f"encoder needs >= 1 output channel, got {spec.encoder_channels}")
    layers = [LayerSpec("conv1", "conv", 5, 64, (2, 2), "prelu")]
    layers += [LayerSpec(f"conv{i}", "conv", 3, 64, (1, 1), "prelu") for i in (2, 3, 4)]
    layers.append(LayerSpec("conv5", "conv", 3, spec.encoder_channels, (1, 1), "prelu"))
    return NetworkSpec(
        name="encoder",
        layers=tuple(layers),
        input_shape=(spec.image_height, spec.image_width, spec.image_channels),
        pre_scale=1.0 / 255.0,
    )


def build_generator(spec: RunSpec, min_feature_size: int = 4) -> NetworkSpec:
    """U-Net decoder: one upsampling head, a three-step downsampling path,
    then three upsampling steps fused with same-resolution features.

    Fusion is channel concatenation consumed at the input of tconv3,
    tconv4 and tconv5, doubling their input widths (64 -> 128). The final
    1-stride transposed convolution maps to 3 channels under a sigmoid.
    """
    c = spec.encoder_channels
    layers = (
        LayerSpec("tconv1", "transposed_conv", 3, 64, (2, 2), "relu"),
        LayerSpec("conv1", "conv", 3, 64, (2, 2), "leaky_relu"),
        LayerSpec("conv2", "conv", 3, 64, (2, 2), "leaky_relu"),
        LayerSpec("conv3", "conv", 3, 64, (2, 2), "leaky_relu"),
        LayerSpec("tconv2", "transposed_conv", 3, 64, (2, 2), "relu"),
        LayerSpec("tconv3", "transposed_conv", 3, 64, (2, 2), "relu", skip_source="conv2"),
        LayerSpec("tconv4", "transposed_conv", 3, 64, (2, 2), "relu", skip_source="conv1"),
        LayerSpec("tconv5", "transposed_conv", 3, spec.image_channels, (1, 1),
                  "sigmoid", skip_source="tconv1"),
    )
    net = NetworkSpec(
        name="generator",
        layers=layers,
        input_shape=(spec.encoder_out_height, spec.encoder_out_width, c),
        post_scale=255.0,
    )
    shapes = net.layer_output_shapes()  # also validates skip geometry
    for name in ("conv1", "conv2", "conv3"):
        h, w, _ = shapes[name]
        if min(h, w) < min_feature_size:
            raise ConfigurationError(
                f"generator {name} output {h}x{w} falls below the "
                f"{min_feature_size}x{min_feature_size} floor; source image too small")
    return net


def build_discriminator(input_shape: tuple[int, int, int]) -> NetworkSpec:
    """Patch discriminator: 64/128/256/512 LeakyReLU ladder, sigmoid head.

    Consumes pixel-scale images (rescaled internally to unit) and emits an
    h x w map of per-patch real probabilities.
    """
    h, w, _ = input_shape
    if min(h, w) < 32:
        raise ConfigurationError(f"discriminator input must be >= 32x32, got {h}x{w}")
    layers = (
        LayerSpec("conv1", "conv", 4, 64, (2, 2), "leaky_relu"),
        LayerSpec("conv2", "conv", 4, 128, (2, 2), "leaky_relu"),
        LayerSpec("conv3", "conv", 4, 256, (2, 2), "leaky_relu"),
        LayerSpec("conv4", "conv", 4, 512, (1, 1), "leaky_relu"),
        LayerSpec("conv5", "conv", 4, 1, (1, 1), "sigmoid"),
    )
    return NetworkSpec(name="discriminator", layers=layers,
                       input_shape=input_shape, pre_scale=1.0 / 255.0)


def discriminator_decision(score_map: torch.Tensor) -> torch.Tensor:
    """Average the patch-score map into one probability per image.

    Accepts (B, 1, h, w) or an unbatched map; returns shape (B,) or a
    scalar tensor respectively.
    """
    if score_map.numel() == 0:
        raise ShapeError("empty score map")
    if score_map.dim() == 4:
        return score_map.mean(dim=(1, 2, 3))
    return score_map.mean()


def _same_pad(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """(before, after) padding so conv output is ceil(size/stride)."""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def _tconv_padding(kernel: int, stride: int) -> tuple[int, int]:
    """(padding, output_padding) so transposed-conv output is size*stride."""
    pad = math.ceil((kernel - stride) / 2)
    out_pad = 2 * pad + stride - kernel
    if not 0 <= out_pad < stride:
        raise ConfigurationError(
            f"no exact x{stride} upsampling for kernel {kernel}")
    return pad, out_pad


def _activation_module(kind: str) -> nn.Module:
    return {
        "prelu": lambda: nn.PReLU(),
        "relu": lambda: nn.ReLU(),
        "leaky_relu": lambda: nn.LeakyReLU(LEAKY_SLOPE),
        "sigmoid": lambda: nn.Sigmoid(),
        "none": lambda: nn.Identity(),
    }[kind]()


class SpecNet(nn.Module):
    """Executes a :class:`NetworkSpec` on NCHW tensors.

    Keeps a forward-call counter (inference-path assertions) and supports
    ``disable_skips`` (zero out skip feeds, shapes unchanged) and
    ``want_taps`` (return every layer's output by name).
    """

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        self.n_forward_calls = 0
        self._pads: dict[str, tuple[int, int, int, int]] = {}
        ops = {}
        acts = {}
        for layer, (h, w, in_ch), _ in spec.shape_chain():
            if layer.kind == "conv":
                (pt, pb) = _same_pad(h, layer.kernel, layer.stride[0])
                (pl, pr) = _same_pad(w, layer.kernel, layer.stride[1])
                self._pads[layer.name] = (pl, pr, pt, pb)
                ops[layer.name] = nn.Conv2d(in_ch, layer.filters, layer.kernel,
                                            stride=layer.stride, padding=0)
            else:
                pad, out_pad = _tconv_padding(layer.kernel, layer.stride[0])
                ops[layer.name] = nn.ConvTranspose2d(
                    in_ch, layer.filters, layer.kernel, stride=layer.stride,
                    padding=pad, output_padding=out_pad)
            acts[layer.name] = _activation_module(layer.activation)
        self._ops = nn.ModuleDict(ops)
        self._acts = nn.ModuleDict(acts)

    def forward(self, x: torch.Tensor, *, disable_skips: bool = False,
                want_taps: bool = False):
        self.n_forward_calls += 1
        h, w, ch = self.spec.input_shape
        if x.dim() != 4 or tuple(x.shape[1:]) != (ch, h, w):
            raise ShapeError(
                f"{self.spec.name}: expected input (B,{ch},{h},{w}), "
                f"got {tuple(x.shape)}")
        if self.spec.pre_scale is not None:
            x = x * self.spec.pre_scale
        taps: dict[str, torch.Tensor] = {}
        out = x
        for layer in self.spec.layers:
            inp = out
            if layer.skip_source is not None:
                skip = taps[layer.skip_source]
                if disable_skips:
                    skip = torch.zeros_like(skip)
                if skip.shape[2:] != inp.shape[2:]:
                    raise ShapeError(
                        f"{self.spec.name}.{layer.name}: skip {layer.skip_source} "
                        f"is {tuple(skip.shape[2:])}, input is {tuple(inp.shape[2:])}")
                inp = torch.cat([inp, skip], dim=1)
            if layer.kind == "conv":
                inp = F.pad(inp, self._pads[layer.name])
            out = self._acts[layer.name](self._ops[layer.name](inp))
            taps[layer.name] = out
        return (out, taps) if want_taps else out


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministic init: truncated normal (std 0.02, +-2 std) for all
    convolution kernels, zero biases. PReLU slopes keep their default."""
    gen = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.trunc_normal_(m.weight, mean=0.0, std=INIT_STD,
                                  a=-2 * INIT_STD, b=2 * INIT_STD, generator=gen)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def build_torch_module(spec: NetworkSpec, seed: int | None = None) -> SpecNet:
    """Instantiate (and optionally deterministically initialize) a SpecNet."""
    net = SpecNet(spec)
    if seed is not None:
        init_parameters(net, seed)
    return net
