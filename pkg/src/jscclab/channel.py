"""Complex-baseband channel pipeline.

Covers everything between the encoder's last convolution and the decoder
input: real<->complex packing, average-power normalization, and AWGN
corruption. The complex vector is carried as paired real arithmetic
(first half real parts, second half imaginary parts), so the same code
path serves both the differentiable training graph and the array-level
test API.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigurationError, NormalizationError, ShapeError

#: Relative tolerance of the power-constraint invariant.
POWER_RTOL = 1e-6


def pack_complex(v: torch.Tensor) -> torch.Tensor:
    """Pair a real vector of length 2m into m complex symbols.

    out[i] = v[i] + 1j * v[m + i]: the first half carries real parts, the
    second half imaginary parts. Applies along the last dimension.
    """
    if v.shape[-1] % 2:
        raise ShapeError(f"real vector length must be even, got {v.shape[-1]}")
    m = v.shape[-1] // 2
    return torch.complex(v[..., :m], v[..., m:])


def unpack_real(z: torch.Tensor) -> torch.Tensor:
    """Exact inverse of :func:`pack_complex`."""
    return torch.cat([z.real, z.imag], dim=-1)


@dataclass
class ChannelSymbolVector:
    """A batch (or single vector) of complex channel symbols.

    When ``normalized`` is set, each vector along the last dimension
    satisfies | sum |z_i|^2 - k*P | <= 1e-6 * k*P.
    """

    symbols: torch.Tensor  # complex dtype, shape (..., m)
    avg_power: float = 1.0
    normalized: bool = False

    @property
    def k(self) -> int:
        return self.symbols.shape[-1]

    def total_power(self) -> torch.Tensor:
        """sum |z_i|^2 along the last dimension, in float64."""
        return (self.symbols.real.double() ** 2
                + self.symbols.imag.double() ** 2).sum(dim=-1)


def normalize_power_real(v: torch.Tensor, avg_power: float = 1.0) -> torch.Tensor:
    """Scale paired-real symbol rows to total power k*avg_power.

    ``v`` has shape (..., 2m) and represents m complex symbols; the scale
    is computed in float64 so the constraint holds to ~1e-7 even for
    k ~ 1e4, then applied in the input dtype. Differentiable.
    """
    if v.shape[-1] % 2:
        raise ShapeError(f"paired-real vector length must be even, got {v.shape[-1]}")
    m = v.shape[-1] // 2
    sq_norm = (v.double() ** 2).sum(dim=-1, keepdim=True)
    if not torch.all(sq_norm > 0):
        raise NormalizationError("cannot power-normalize an all-zero symbol vector")
    scale = torch.sqrt(m * float(avg_power) / sq_norm)
    return v * scale.to(v.dtype)


def power_normalize(z_tilde: torch.Tensor, avg_power: float = 1.0,
                    k: int | None = None) -> ChannelSymbolVector:
    """Normalize a complex symbol vector to total power k*avg_power.

    z = sqrt(k*P) * z~ / sqrt(z~^H z~). Direction-preserving; raises
    :class:`NormalizationError` on an all-zero input.
    """
    if not z_tilde.is_complex():
        raise ShapeError("power_normalize expects a complex tensor; "
                         "use pack_complex first")
    if k is not None and k != z_tilde.shape[-1]:
        raise ShapeError(f"k={k} does not match symbol count {z_tilde.shape[-1]}")
    v = unpack_real(z_tilde)
    z = pack_complex(normalize_power_real(v, avg_power))
    return ChannelSymbolVector(symbols=z, avg_power=float(avg_power), normalized=True)


def awgn_real(v: torch.Tensor, sigma2: float,
              generator: torch.Generator | None = None) -> torch.Tensor:
    """Add circularly-symmetric complex Gaussian noise in paired-real form.

    Each of the 2m real components receives N(0, sigma2/2), giving
    per-symbol noise power sigma2. The noise is drawn as a constant, so
    gradients pass through the addition unchanged.
    """
    if sigma2 < 0:
        raise ConfigurationError(f"noise variance must be >= 0, got {sigma2}")
    with torch.no_grad():
        noise = torch.randn(v.shape, generator=generator, dtype=v.dtype,
                            device=v.device)
        noise = noise * float(np.sqrt(sigma2 / 2.0))
    return v + noise


def awgn_corrupt(z: ChannelSymbolVector, sigma2: float,
                 generator: torch.Generator | None = None) -> ChannelSymbolVector:
    """AWGN transfer function z_hat = z + n with n ~ CN(0, sigma2 I)."""
    v = unpack_real(z.symbols)
    v_hat = awgn_real(v, sigma2, generator)
    return ChannelSymbolVector(symbols=pack_complex(v_hat),
                               avg_power=z.avg_power, normalized=False)


def check_power_constraint(z: ChannelSymbolVector) -> bool:
    """True when every vector meets the normalized-power invariant."""
    target = z.k * z.avg_power
    err = (z.total_power() - target).abs()
    return bool(torch.all(err <= POWER_RTOL * target))


def dump_csym(z: ChannelSymbolVector, path: str | Path) -> None:
    """Debug dump: little-endian float32, all real parts then all imaginary."""
    v = unpack_real(z.symbols.detach().reshape(-1, z.k)).cpu().numpy()
    v.astype("<f4").tofile(str(path))


def load_csym(path: str | Path, k: int) -> torch.Tensor:
    """Read a `.csym` dump back into a complex tensor of width k."""
    raw = np.fromfile(str(path), dtype="<f4")
    if raw.size % (2 * k):
        raise ShapeError(f"{path}: {raw.size} floats do not tile into 2*{k} columns")
    v = torch.from_numpy(raw.reshape(-1, 2 * k).copy())
    return pack_complex(v).squeeze(0)
