"""Configuration arithmetic for JSCC runs.

Owns the SNR <-> noise-variance conversion, the bandwidth-compression
bookkeeping (source dimension n, channel dimension k, encoder output
channels c, effective BCR), the training hyperparameter bundle, and the
(bcr, snr) experiment grid.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

from .errors import ConfigurationError

METHODS = ("g_unet", "cgan", "baseline")

#: Smallest accepted image side. The decoder's internal path halves the
#: resolution three times and must stay at or above 4x4.
MIN_IMAGE_SIDE = 32

CONFIG_KEYS = (
    "dataset", "bcr", "snr_train_db", "epochs", "batch_size",
    "learning_rate", "lambda_mse", "lambda_ssim", "lambda_l1", "seed",
    "method",
)


def snr_to_noise_variance(snr_db: float) -> float:
    """Per-complex-symbol noise variance for a channel SNR in dB.

    With unit average transmit power, sigma^2 = 10^(-snr_db / 10).
    """
    if not math.isfinite(snr_db):
        raise ConfigurationError(f"SNR must be finite, got {snr_db!r}")
    return 10.0 ** (-snr_db / 10.0)


def derive_dimensions(r: float, h_i: int, w_i: int, c_i: int) -> tuple[int, int, int, float]:
    """Derive (n, k, c, bcr_effective) from a target BCR and image geometry.

    n = H*W*C source scalars, k = floor(r*n) channel symbols, and the
    encoder emits c = floor(k / (H_O*W_O/2)) feature maps over the
    half-resolution grid (H_O = H/2, W_O = W/2). The effective BCR is
    what the c feature maps can actually carry: c*H_O*W_O / (2n) <= r.
    """
    if not (0.0 < r <= 1.0):
        raise ConfigurationError(f"BCR must lie in (0, 1], got {r}")
    if min(h_i, w_i, c_i) < 1:
        raise ConfigurationError(f"image dims must be positive, got {h_i}x{w_i}x{c_i}")
    if h_i % 2 or w_i % 2:
        raise ConfigurationError(f"image sides must be even, got {h_i}x{w_i}")
    n = h_i * w_i * c_i
    k = math.floor(r * n)
    h_o, w_o = h_i // 2, w_i // 2
    # c = floor(k / (H_O*W_O/2)) done in exact integer arithmetic.
    c = (2 * k) // (h_o * w_o)
    if c < 1:
        min_r = (h_o * w_o / 2) / n
        raise ConfigurationError(
            f"target BCR {r} too small for a {h_i}x{w_i}x{c_i} source: "
            f"needs at least one encoder channel, i.e. r >= {min_r:.6g}"
        )
    bcr_effective = c * h_o * w_o / (2 * n)
    return n, k, c, bcr_effective


def expand_grid(bcr_set, snr_set) -> list[tuple[float, float]]:
    """Cartesian (r, snr) product, r-major, matching the training loop nesting."""
    bcr_set, snr_set = list(bcr_set), list(snr_set)
    if not bcr_set or not snr_set:
        raise ConfigurationError("bcr and snr grids must be non-empty")
    return [(r, s) for r in bcr_set for s in snr_set]


def derive_seed(seed: int, label: str) -> int:
    """Stable per-component seed stream, hashed from the run seed and a label."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


@dataclass(frozen=True)
class RunSpec:
    """One (dataset, BCR, train-SNR) cell with its derived dimensions.

    Immutable after construction; shared freely across workers.
    """

    dataset_id: str
    image_height: int
    image_width: int
    image_channels: int
    bcr_target: float
    snr_train_db: float
    avg_power: float = 1.0
    encoder_out_height: int = field(default=0)
    encoder_out_width: int = field(default=0)
    source_dim: int = field(default=0)
    channel_dim: int = field(default=0)
    encoder_channels: int = field(default=0)
    bcr_effective: float = field(default=0.0)

    @classmethod
    def create(cls, dataset_id: str, image_height: int, image_width: int,
               image_channels: int, bcr_target: float, snr_train_db: float,
               avg_power: float = 1.0) -> "RunSpec":
        if min(image_height, image_width) < MIN_IMAGE_SIDE:
            raise ConfigurationError(
                f"image sides must be >= {MIN_IMAGE_SIDE}, got "
                f"{image_height}x{image_width}"
            )
        if not math.isfinite(snr_train_db):
            raise ConfigurationError(f"train SNR must be finite, got {snr_train_db!r}")
        if avg_power <= 0:
            raise ConfigurationError(f"average power must be positive, got {avg_power}")
        n, k, c, bcr_eff = derive_dimensions(
            bcr_target, image_height, image_width, image_channels)
        h_o, w_o = image_height // 2, image_width // 2
        if (c * h_o * w_o) % 2:
            raise ConfigurationError(
                f"encoder output {h_o}x{w_o}x{c} holds an odd scalar count; "
                "cannot pair into complex symbols")
        return cls(
            dataset_id=dataset_id,
            image_height=image_height,
            image_width=image_width,
            image_channels=image_channels,
            bcr_target=bcr_target,
            snr_train_db=snr_train_db,
            avg_power=avg_power,
            encoder_out_height=h_o,
            encoder_out_width=w_o,
            source_dim=n,
            channel_dim=k,
            encoder_channels=c,
            bcr_effective=bcr_eff,
        )

    @property
    def k_eff(self) -> int:
        """Complex symbols actually transmitted (never more than channel_dim)."""
        return (self.encoder_channels * self.encoder_out_height
                * self.encoder_out_width) // 2

    def with_snr(self, snr_train_db: float) -> "RunSpec":
        return replace(self, snr_train_db=snr_train_db)

    def run_name(self) -> str:
        return f"r{self.bcr_target:.6g}_snr{self.snr_train_db:g}"


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults follow the reference setup
    (20 epochs, batch 1, Adam at 1e-3, combined-loss weights 0.9/0.1)."""

    epochs: int = 20
    batch_size: int = 1
    learning_rate: float = 1e-3
    lambda_mse: float = 0.9
    lambda_ssim: float = 0.1
    lambda_l1: float = 100.0
    snr_set: tuple[float, ...] = (10.0,)
    bcr_set: tuple[float, ...] = (1.0 / 12.0,)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.lambda_mse < 0 or self.lambda_ssim < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if self.lambda_mse + self.lambda_ssim <= 0:
            raise ConfigurationError("at least one of lambda_mse/lambda_ssim must be positive")
        if self.lambda_l1 < 0:
            raise ConfigurationError(f"lambda_l1 must be >= 0, got {self.lambda_l1}")
        if not self.snr_set or not self.bcr_set:
            raise ConfigurationError("snr_set and bcr_set must be non-empty")


def _parse_ratio(value) -> float:
    """Accept a float or a 'p/q' string (so 1/12 stays exact in configs)."""
    if isinstance(value, str):
        try:
            return float(Fraction(value))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigurationError(f"bad ratio {value!r}: {exc}") from exc
    if isinstance(value, (int, float)):
        return float(value)
    raise ConfigurationError(f"bad ratio {value!r}")


def load_config(path: str | Path) -> dict:
    """Load and validate a JSON run config. Unknown keys are fatal."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    if "method" in raw and raw["method"] not in METHODS:
        raise ConfigurationError(
            f"unknown method {raw['method']!r}; expected one of {METHODS}")
    if "bcr" in raw:
        bcr = raw["bcr"]
        raw["bcr"] = ([_parse_ratio(v) for v in bcr] if isinstance(bcr, list)
                      else [_parse_ratio(bcr)])
    if "snr_train_db" in raw:
        snr = raw["snr_train_db"]
        raw["snr_train_db"] = ([float(v) for v in snr] if isinstance(snr, list)
                               else [float(snr)])
    return raw


def train_config_from_dict(cfg: dict) -> TrainConfig:
    """Build a TrainConfig from (already validated) config-file keys."""
    kwargs = {}
    mapping = {
        "epochs": "epochs", "batch_size": "batch_size",
        "learning_rate": "learning_rate", "lambda_mse": "lambda_mse",
        "lambda_ssim": "lambda_ssim", "lambda_l1": "lambda_l1", "seed": "seed",
        "snr_train_db": "snr_set", "bcr": "bcr_set",
    }
    for key, attr in mapping.items():
        if key in cfg and cfg[key] is not None:
            value = cfg[key]
            if attr in ("snr_set", "bcr_set"):
                value = tuple(value)
            kwargs[attr] = value
    defaults = {f.name for f in fields(TrainConfig)}
    assert set(kwargs) <= defaults
    return TrainConfig(**kwargs)
