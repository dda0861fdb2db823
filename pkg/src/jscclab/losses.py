"""Training objectives.

The reconstruction losses consume unit-scale image batches (the
generator's pre-denormalization output). Adversarial terms take the
patch-averaged per-image decisions; the expectation is the batch mean of
those decisions and the log is applied after averaging. Log arguments are
clamped at 1e-7.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import torch

from .errors import ConfigurationError, ContractError, ShapeError
from .metrics import SsimParams, ssim_index
from .nets import ImageBatch, PixelScale

CLAMP_EPS = 1e-7

TRAIN_LOG_COLUMNS = ("step", "epoch", "l_mse", "l_ssim", "l_combined",
                     "l_gen", "l_disc", "l_l1")


def _check_pair(x: ImageBatch, y: ImageBatch) -> None:
    if x.scale is not PixelScale.UNIT or y.scale is not PixelScale.UNIT:
        raise ContractError(
            f"losses expect unit-scale batches, got {x.scale}/{y.scale}")
    if x.data.shape != y.data.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.data.shape)} vs {tuple(y.data.shape)}")


def mse_loss(x: ImageBatch, x_hat: ImageBatch) -> torch.Tensor:
    """Mean squared pixel error over batch, pixels, and channels."""
    _check_pair(x, x_hat)
    return ((x.data - x_hat.data) ** 2).mean()


def l1_term(x: ImageBatch, x_hat: ImageBatch) -> torch.Tensor:
    """Mean absolute pixel error on unit scale."""
    _check_pair(x, x_hat)
    return (x.data - x_hat.data).abs().mean()


def ssim_loss(x: ImageBatch, x_hat: ImageBatch,
              params: SsimParams | None = None) -> torch.Tensor:
    """1 - mean SSIM at unit dynamic range (shared SSIM core)."""
    _check_pair(x, x_hat)
    params = params or SsimParams(dynamic_range=1.0)
    return 1.0 - ssim_index(x.nchw(), x_hat.nchw(), params)


def combined_loss(x: ImageBatch, x_hat: ImageBatch, lambda_mse: float,
                  lambda_ssim: float,
                  ssim_params: SsimParams | None = None) -> torch.Tensor:
    """Weighted reconstruction loss lambda_M * MSE + lambda_S * (1 - SSIM).

    With (1, 0) this is exactly the MSE loss used by the outer adversarial
    training stage.
    """
    if lambda_mse < 0 or lambda_ssim < 0:
        raise ConfigurationError("loss weights must be non-negative")
    if lambda_mse + lambda_ssim <= 0:
        raise ConfigurationError("at least one loss weight must be positive")
    total = lambda_mse * mse_loss(x, x_hat)
    if lambda_ssim > 0:
        total = total + lambda_ssim * ssim_loss(x, x_hat, ssim_params)
    return total


def _clamped_log(p: torch.Tensor) -> torch.Tensor:
    return torch.log(torch.clamp(p, CLAMP_EPS, 1.0 - CLAMP_EPS))


def _as_batch(p) -> torch.Tensor:
    t = p if isinstance(p, torch.Tensor) else torch.as_tensor(p, dtype=torch.float64)
    return t.reshape(-1)


def gan_loss(d_real, d_fake) -> torch.Tensor:
    """Adversarial value E[log D(x)] + E[log(1 - D(G(z)))].

    Inputs are the patch-averaged decisions, one probability per image;
    expectations are batch means.
    """
    d_real, d_fake = _as_batch(d_real), _as_batch(d_fake)
    return _clamped_log(d_real).mean() + _clamped_log(1.0 - d_fake).mean()


def generator_loss(d_fake, x: ImageBatch, x_hat: ImageBatch,
                   lambda_l1: float, non_saturating: bool = False) -> torch.Tensor:
    """Generator objective: adversarial term plus lambda_1 * L1.

    The saturating form E[log(1 - D(G(z)))] is the default; a
    non-saturating -E[log D(G(z))] variant sits behind the flag.
    """
    if lambda_l1 < 0:
        raise ConfigurationError(f"lambda_l1 must be >= 0, got {lambda_l1}")
    d_fake = _as_batch(d_fake)
    if non_saturating:
        adv = -_clamped_log(d_fake).mean()
    else:
        adv = _clamped_log(1.0 - d_fake).mean()
    if lambda_l1 == 0:
        return adv
    return adv + lambda_l1 * l1_term(x, x_hat)


def discriminator_loss(d_real, d_fake) -> torch.Tensor:
    """Negated adversarial value, so minimizing it maximizes gan_loss."""
    return -gan_loss(d_real, d_fake)


@dataclass(frozen=True)
class LossBundle:
    """Per-step loss snapshot. ``l_l1`` carries the weighted L1 term
    (lambda_1 included), so l_gan + l_l1 is the joint minimax objective.
    Fields not produced by a method are None."""

    l_mse: float | None = None
    l_ssim: float | None = None
    l_combined: float | None = None
    l_gan: float | None = None
    l_gen: float | None = None
    l_l1: float | None = None
    l_disc: float | None = None


class TrainLogWriter:
    """Appends per-step loss rows to ``train_log.csv`` (fixed schema)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists():
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(TRAIN_LOG_COLUMNS)

    def append(self, step: int, epoch: int, bundle: LossBundle) -> None:
        row = [str(step), str(epoch)]
        for name in ("l_mse", "l_ssim", "l_combined", "l_gen", "l_disc", "l_l1"):
            value = getattr(bundle, name)
            row.append("" if value is None else repr(float(value)))
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow(row)


def read_train_log(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != TRAIN_LOG_COLUMNS:
            raise ContractError(
                f"{path}: expected columns {TRAIN_LOG_COLUMNS}, got {reader.fieldnames}")
        return list(reader)
