"""No-skip symmetric autoencoder baseline.

Shares the standard encoder and mirrors its widths in a five-layer
transposed-convolution decoder without any skip connections: four
stride-1 layers at encoder resolution, then one stride-2 upsample back to
the source size under a sigmoid. Used as the ablation control for the
skip-connection comparisons; always labeled "baseline (no-skip)".
"""

from __future__ import annotations

from .nets import LayerSpec, NetworkSpec, build_encoder
from .runspec import RunSpec


def build_baseline_decoder(spec: RunSpec) -> NetworkSpec:
    layers = tuple(
        [LayerSpec(f"tconv{i}", "transposed_conv", 3, 64, (1, 1), "relu")
         for i in range(1, 5)]
        + [LayerSpec("tconv5", "transposed_conv", 3, spec.image_channels,
                     (2, 2), "sigmoid")]
    )
    return NetworkSpec(
        name="baseline_decoder",
        layers=layers,
        input_shape=(spec.encoder_out_height, spec.encoder_out_width,
                     spec.encoder_channels),
        post_scale=255.0,
    )


def build_baseline(spec: RunSpec) -> tuple[NetworkSpec, NetworkSpec]:
    """(encoder, decoder) pair for the no-skip baseline."""
    return build_encoder(spec), build_baseline_decoder(spec)
