"""Evaluation metrics: PSNR, windowed SSIM, and a pluggable perceptual
feature distance.

SSIM follows the three-factor luminance/contrast/structure form with an
11x11 Gaussian window (sigma 1.5) over valid window positions, computed
per channel and averaged. The same differentiable core backs both the
metric and the training loss.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ContractError, ShapeError
from .nets import ImageBatch, PixelScale

METRICS_COLUMNS = ("run_id", "method", "dataset", "bcr", "snr_train_db",
                   "snr_test_db", "psnr_db", "ssim", "lpips", "n_images")

P_MAX = 255.0


@dataclass(frozen=True)
class SsimParams:
    """SSIM constants; defaults mirror the original implementation
    (exponents 1, C1=(0.01*L)^2, C2=(0.03*L)^2, C3=C2/2, 11x11 Gaussian
    window with sigma 1.5)."""

    alpha: float = 1.0
    beta: float = 1.0
    ssim_gamma: float = 1.0
    dynamic_range: float = 1.0
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    @property
    def c3(self) -> float:
        return self.c2 / 2.0

    def with_range(self, dynamic_range: float) -> "SsimParams":
        return SsimParams(self.alpha, self.beta, self.ssim_gamma, dynamic_range,
                          self.window_size, self.window_sigma, self.k1, self.k2)


def gaussian_window(size: int, sigma: float, dtype=torch.float32) -> torch.Tensor:
    """Normalized 2-D Gaussian kernel of the given size."""
    ax = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = torch.outer(g, g)
    return (k / k.sum()).to(dtype)


def _windowed_moments(x: torch.Tensor, y: torch.Tensor, params: SsimParams):
    """Means/variances/covariance over valid Gaussian windows, per channel."""
    channels = x.shape[1]
    win = gaussian_window(params.window_size, params.window_sigma, x.dtype)
    win = win.to(x.device).expand(channels, 1, -1, -1)

    def filt(t):
        return F.conv2d(t, win, groups=channels)

    mu_x, mu_y = filt(x), filt(y)
    var_x = filt(x * x) - mu_x ** 2
    var_y = filt(y * y) - mu_y ** 2
    cov = filt(x * y) - mu_x * mu_y
    return mu_x, mu_y, var_x, var_y, cov


def ssim_index(x: torch.Tensor, y: torch.Tensor,
               params: SsimParams | None = None) -> torch.Tensor:
    """Differentiable mean SSIM between NCHW tensors on the params' scale.

    Uses the product of luminance, contrast, and structure factors; with
    default exponents and C3 = C2/2 the contrast-structure product reduces
    algebraically to (2*cov + C2)/(var_x + var_y + C2), which is the form
    evaluated (no square roots in the training graph).
    """
    params = params or SsimParams()
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dim() != 4:
        raise ShapeError(f"expected NCHW tensors, got {x.dim()} dims")
    if min(x.shape[2], x.shape[3]) < params.window_size:
        raise ContractError(
            f"images {x.shape[2]}x{x.shape[3]} smaller than the "
            f"{params.window_size}x{params.window_size} SSIM window")
    mu_x, mu_y, var_x, var_y, cov = _windowed_moments(x, y, params)
    c1, c2, c3 = params.c1, params.c2, params.c3
    lum = (2 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    default_exponents = (params.alpha == params.beta == params.ssim_gamma == 1.0)
    if default_exponents and c3 == c2 / 2.0:
        ssim_map = lum * (2 * cov + c2) / (var_x + var_y + c2)
    else:
        sig_x = torch.sqrt(var_x.clamp_min(0.0))
        sig_y = torch.sqrt(var_y.clamp_min(0.0))
        con = (2 * sig_x * sig_y + c2) / (var_x + var_y + c2)
        struct = (cov + c3) / (sig_x * sig_y + c3)
        ssim_map = (lum ** params.alpha) * (con ** params.beta) * (struct ** params.ssim_gamma)
    return ssim_map.mean()


def ssim_metric(x: ImageBatch, y: ImageBatch,
                params: SsimParams | None = None) -> float:
    """Mean SSIM between two image batches at their common pixel scale."""
    if x.scale != y.scale:
        raise ContractError(f"pixel-scale mismatch: {x.scale} vs {y.scale}")
    if params is None:
        rng = P_MAX if x.scale is PixelScale.PIXEL_255 else 1.0
        params = SsimParams(dynamic_range=rng)
    return float(ssim_index(x.nchw().float(), y.nchw().float(), params).item())


def psnr(x: ImageBatch, y: ImageBatch) -> float:
    """Peak SNR in dB on the [0, 255] scale: 10*log10(255^2 / MSE).

    Returns ``math.inf`` when the images match exactly.
    """
    for b in (x, y):
        if b.scale is not PixelScale.PIXEL_255:
            raise ContractError(f"psnr expects pixel_255 batches, got {b.scale}")
    if x.data.shape != y.data.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.data.shape)} vs {tuple(y.data.shape)}")
    mse = ((x.data.double() - y.data.double()) ** 2).mean().item()
    return psnr_from_mse(mse)


def psnr_from_mse(mse: float, p_max: float = P_MAX) -> float:
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(p_max ** 2 / mse)


class FeatureExtractor(nn.Module):
    """Frozen backbone with named taps for perceptual distances.

    ``backbone`` must be an ``nn.Sequential``-like module; activations at
    the listed child indices are collected during a single forward pass.
    """

    def __init__(self, backbone: nn.Module, tap_indices: list[int],
                 input_norm: tuple[tuple[float, ...], tuple[float, ...]] | None = None):
        super().__init__()
        self.backbone = backbone
        self.tap_indices = sorted(tap_indices)
        self.input_norm = input_norm
        for p in self.backbone.parameters():
            p.requires_grad_(False)
        self.backbone.eval()

    def features(self, x_unit: torch.Tensor) -> list[torch.Tensor]:
        if self.input_norm is not None:
            mean, std = self.input_norm
            mean = torch.tensor(mean, dtype=x_unit.dtype).view(1, -1, 1, 1)
            std = torch.tensor(std, dtype=x_unit.dtype).view(1, -1, 1, 1)
            x_unit = (x_unit - mean) / std
        feats = []
        out = x_unit
        for idx, child in enumerate(self.backbone):
            out = child(out)
            if idx in self.tap_indices:
                feats.append(out)
        return feats


#: torchvision.vgg16 feature indices after each stage's last ReLU.
VGG16_TAPS = [3, 8, 15, 22, 29]
_IMAGENET_NORM = ((0.485, 0.456, 0.406), (0.229, 0.224, 0.225))


def load_vgg16_extractor(weights_path: str | Path) -> FeatureExtractor:
    """VGG16 feature extractor from a local state-dict file.

    Raises FileNotFoundError when the weights file is absent; callers
    report the perceptual metric as missing rather than fabricating it.
    """
    weights_path = Path(weights_path)
    if not weights_path.exists():
        raise FileNotFoundError(f"VGG16 weights file not found: {weights_path}")
    from torchvision.models import vgg16  # heavy import, only on demand

    model = vgg16(weights=None)
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    return FeatureExtractor(model.features, VGG16_TAPS, input_norm=_IMAGENET_NORM)


def perceptual_distance(x: ImageBatch, y: ImageBatch,
                        extractor: FeatureExtractor) -> float:
    """Mean squared distance between unit-normalized deep features.

    Zero for identical inputs; smaller means perceptually closer.
    """
    xa, ya = x.to_unit().nchw().float(), y.to_unit().nchw().float()
    if xa.shape != ya.shape:
        raise ShapeError(f"shape mismatch: {tuple(xa.shape)} vs {tuple(ya.shape)}")
    with torch.no_grad():
        fx = extractor.features(xa)
        fy = extractor.features(ya)
    total = 0.0
    for a, b in zip(fx, fy):
        a = a / a.norm(dim=1, keepdim=True).clamp_min(1e-10)
        b = b / b.norm(dim=1, keepdim=True).clamp_min(1e-10)
        total += ((a - b) ** 2).sum(dim=1).mean().item()
    return total / len(fx)


@dataclass
class MetricsReport:
    """One evaluation row keyed by (method, bcr, train SNR, test SNR)."""

    run_id: str
    method: str
    dataset: str
    bcr: float
    snr_train_db: float
    snr_test_db: float
    psnr_db: float
    ssim: float
    lpips: float | None
    n_images: int

    def to_row(self) -> list[str]:
        return [
            self.run_id, self.method, self.dataset,
            _fmt(self.bcr), _fmt(self.snr_train_db), _fmt(self.snr_test_db),
            _fmt(self.psnr_db), _fmt(self.ssim),
            "" if self.lpips is None else _fmt(self.lpips),
            str(self.n_images),
        ]


def _fmt(v: float) -> str:
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def write_metrics_csv(path: str | Path, reports: list[MetricsReport]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for report in reports:
            writer.writerow(report.to_row())


def read_metrics_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != METRICS_COLUMNS:
            raise ContractError(
                f"{path}: expected columns {METRICS_COLUMNS}, got {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ContractError(f"{path}: no metric rows")
    return rows
