"""
Spectral Core - Fourier representation of periodic fields on the torus [0, 2*pi]
Airy flow, inverse derivatives, projections, Sobolev norms and dealiased products

Fields store coefficients for k = -K..K with the convention
f_hat_k = (1/2pi) * integral of exp(-ikx) f(x) dx, so that f(x) = sum_k f_hat_k exp(ikx).
"""

import math
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import fft as sp_fft

from app.services.error_management import (
    GridMismatchError,
    InvalidParameterError,
    NonFiniteFieldError,
)

logger = structlog.get_logger(__name__)

MAX_GRID_SIZE = 2 ** 30

Scalar = Union[int, float, complex, np.number]


class BandSide(str, Enum):
    """Side selected by band_project"""
    LOW = "low"
    HIGH = "high"


class GridSpec(BaseModel):
    """Retained bandwidth K and physical product grid size M"""

    model_config = ConfigDict(frozen=True)

    K: int = Field(..., ge=1, description="Largest retained wavenumber")
    M: int = Field(..., description="Physical grid size used for nonlinear products")

    @model_validator(mode="after")
    def _check_product_grid(self) -> "GridSpec":
        if self.M % 2 != 0:
            raise ValueError("M must be even")
        if self.M < 4 * (self.K + 1):
            raise ValueError(f"M={self.M} is below the alias-free minimum 4(K+1)={4 * (self.K + 1)}")
        return self

    @property
    def size(self) -> int:
        return 2 * self.K + 1

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1, dtype=np.float64)


class SobolevIndex(BaseModel):
    """Sobolev regularity index s"""

    model_config = ConfigDict(frozen=True)

    s: float

    @field_validator("s")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("Sobolev index must be finite")
        return value

    def weights(self, k: np.ndarray) -> np.ndarray:
        return np.power(1.0 + k * k, self.s)


class SpectralField(BaseModel):
    """Fourier coefficients on a grid, optionally flagged as a real-valued function"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: GridSpec
    coeffs: np.ndarray
    real_flag: bool = True

    @field_validator("coeffs", mode="before")
    @classmethod
    def _as_complex_array(cls, value) -> np.ndarray:
        array = np.array(value, dtype=np.complex128, copy=True)
        array.flags.writeable = False
        return array

    @model_validator(mode="after")
    def _check_invariants(self) -> "SpectralField":
        if self.coeffs.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} coefficients, got shape {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise NonFiniteFieldError("field has non-finite coefficients")
        if self.real_flag and not np.array_equal(self.coeffs, np.conj(self.coeffs[::-1])):
            raise ValueError("real field coefficients must satisfy f_hat(-k) = conj(f_hat(k))")
        return self

    @property
    def K(self) -> int:
        return self.grid.K

    def mode(self, k: int) -> complex:
        if abs(k) > self.grid.K:
            return 0j
        return complex(self.coeffs[k + self.grid.K])

    def _combine(self, other: "SpectralField", sign: float) -> "SpectralField":
        if not isinstance(other, SpectralField):
            return NotImplemented
        _require_same_grid(self, other)
        return SpectralField(
            grid=self.grid,
            coeffs=self.coeffs + sign * other.coeffs,
            real_flag=self.real_flag and other.real_flag,
        )

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return self._combine(other, 1.0)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self._combine(other, -1.0)

    def __neg__(self) -> "SpectralField":
        return SpectralField(grid=self.grid, coeffs=-self.coeffs, real_flag=self.real_flag)

    def __mul__(self, scalar: Scalar) -> "SpectralField":
        if isinstance(scalar, SpectralField):
            return NotImplemented
        scalar = complex(scalar)
        if scalar.imag == 0.0:
            return SpectralField(grid=self.grid, coeffs=self.coeffs * scalar.real, real_flag=self.real_flag)
        return SpectralField(grid=self.grid, coeffs=self.coeffs * scalar, real_flag=False)

    __rmul__ = __mul__


def _require_same_grid(*fields: SpectralField):
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise GridMismatchError(f"grid {other.grid} does not match {grid}")


def _from_nonnegative(grid: GridSpec, positive: np.ndarray) -> SpectralField:
    """Assemble an exactly Hermitian real field from modes k = 0..K"""
    coeffs = np.empty(grid.size, dtype=np.complex128)
    coeffs[grid.K:] = positive
    coeffs[grid.K] = positive[0].real
    coeffs[:grid.K] = np.conj(positive[:0:-1])
    return SpectralField(grid=grid, coeffs=coeffs, real_flag=True)


def _apply_symbol(f: SpectralField, symbol) -> SpectralField:
    """Multiply mode k by symbol(k); symbol(-k) must equal conj(symbol(k)) for real fields"""
    grid = f.grid
    if f.real_flag:
        k = np.arange(0, grid.K + 1, dtype=np.float64)
        return _from_nonnegative(grid, f.coeffs[grid.K:] * symbol(k))
    return SpectralField(grid=grid, coeffs=f.coeffs * symbol(grid.wavenumbers), real_flag=False)


def grid_new(K: int, M: Optional[int] = None) -> GridSpec:
    """Grid with bandwidth K; M defaults to the smallest power of two >= 4(K+1)"""

    if isinstance(K, bool) or not isinstance(K, (int, np.integer)) or K < 1:
        raise InvalidParameterError(f"K must be an integer >= 1, got {K!r}")
    K = int(K)
    minimum = 4 * (K + 1)
    if M is None:
        M = 1 << (minimum - 1).bit_length()
    if M > MAX_GRID_SIZE:
        raise InvalidParameterError(f"product grid size {M} for K={K} exceeds {MAX_GRID_SIZE}")
    if M % 2 != 0 or M < minimum:
        raise InvalidParameterError(f"M={M} must be even and at least 4(K+1)={minimum}")
    return GridSpec(K=K, M=int(M))


def zeros(grid: GridSpec, real: bool = True) -> SpectralField:
    return SpectralField(grid=grid, coeffs=np.zeros(grid.size, dtype=np.complex128), real_flag=real)


def from_modes(grid: GridSpec, modes: Dict[int, complex], real: bool = True) -> SpectralField:
    """Field with the given modes; for real fields the conjugate partners are filled in"""
    coeffs = np.zeros(grid.size, dtype=np.complex128)
    for k, value in modes.items():
        if abs(k) > grid.K:
            raise InvalidParameterError(f"mode {k} outside bandwidth K={grid.K}")
        coeffs[k + grid.K] = value
        if real:
            coeffs[-k + grid.K] = np.conj(value)
    if real:
        coeffs[grid.K] = coeffs[grid.K].real
    return SpectralField(grid=grid, coeffs=coeffs, real_flag=real)


def random_field(grid: GridSpec, rng: np.random.Generator, support: Optional[int] = None,
                 real: bool = True, zero_mean: bool = True) -> SpectralField:
    """Gaussian random coefficients on |k| <= support"""
    support = grid.K if support is None else min(support, grid.K)
    draws = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
    draws[np.abs(grid.wavenumbers) > support] = 0.0
    if zero_mean:
        draws[grid.K] = 0.0
    if real:
        return _from_nonnegative(grid, draws[grid.K:])
    return SpectralField(grid=grid, coeffs=draws, real_flag=False)


def apply_airy(f: SpectralField, sigma: float) -> SpectralField:
    """e^{sigma d^3}: multiplies mode k by exp(-i sigma k^3)"""
    if not math.isfinite(sigma):
        raise InvalidParameterError("Airy time must be finite")
    return _apply_symbol(f, lambda k: np.exp(-1j * (sigma * (k * k * k))))


def inv_dx(f: SpectralField, power: int = 1) -> SpectralField:
    """Inverse derivative (ik)^{-power} on k != 0, zero on the mean"""
    if power not in (1, 2):
        raise InvalidParameterError(f"inverse derivative power must be 1 or 2, got {power}")

    def symbol(k: np.ndarray) -> np.ndarray:
        out = np.zeros(k.shape, dtype=np.complex128)
        nonzero = k != 0
        out[nonzero] = 1.0 / (1j * k[nonzero]) ** power
        return out

    return _apply_symbol(f, symbol)


def project_nonzero(f: SpectralField) -> SpectralField:
    """P: removes the mean"""
    coeffs = f.coeffs.copy()
    coeffs[f.grid.K] = 0.0
    return SpectralField(grid=f.grid, coeffs=coeffs, real_flag=f.real_flag)


def zero_mode(f: SpectralField) -> complex:
    """P_0: the mean coefficient"""
    return complex(f.coeffs[f.grid.K])


def mean_of_product(f: SpectralField, g: SpectralField) -> complex:
    """P_0[fg] = sum_k f_hat_k g_hat_{-k}, exactly real when both factors are real"""
    _require_same_grid(f, g)
    if f.real_flag and g.real_flag:
        # g_hat_{-k} = conj(g_hat_k)
        return complex(inner_product(f, g).real / (2.0 * math.pi))
    return complex(np.sum(f.coeffs * g.coeffs[::-1]))


def band_project(f: SpectralField, N: float, side: Union[BandSide, str] = BandSide.LOW) -> SpectralField:
    """P_{<=N} (low) or P_{>N} (high)"""
    if N < 0:
        raise InvalidParameterError(f"band cutoff must be nonnegative, got {N}")
    side = BandSide(side)
    low = np.abs(f.grid.wavenumbers) <= N
    keep = low if side == BandSide.LOW else ~low
    return SpectralField(grid=f.grid, coeffs=np.where(keep, f.coeffs, 0.0), real_flag=f.real_flag)


def regrid(f: SpectralField, grid: GridSpec) -> SpectralField:
    """Zero-pad or truncate f onto another bandwidth"""
    coeffs = np.zeros(grid.size, dtype=np.complex128)
    shared = min(f.grid.K, grid.K)
    coeffs[grid.K - shared:grid.K + shared + 1] = f.coeffs[f.grid.K - shared:f.grid.K + shared + 1]
    return SpectralField(grid=grid, coeffs=coeffs, real_flag=f.real_flag)


def _as_index(s: Union[float, SobolevIndex]) -> SobolevIndex:
    return s if isinstance(s, SobolevIndex) else SobolevIndex(s=s)


def sobolev_norm(f: SpectralField, s: Union[float, SobolevIndex]) -> float:
    """||f||_{H^s} = sqrt(2 pi) (sum (1+k^2)^s |f_hat_k|^2)^{1/2}"""
    weights = _as_index(s).weights(f.grid.wavenumbers)
    return float(math.sqrt(2.0 * math.pi) * np.sqrt(np.sum(weights * np.abs(f.coeffs) ** 2)))


def l2_norm(f: SpectralField) -> float:
    return sobolev_norm(f, 0.0)


def inner_product(f: SpectralField, g: SpectralField) -> complex:
    """L^2 inner product via Parseval"""
    _require_same_grid(f, g)
    return complex(2.0 * math.pi * np.sum(f.coeffs * np.conj(g.coeffs)))


def _full_spectrum(f: SpectralField) -> np.ndarray:
    K, M = f.grid.K, f.grid.M
    spectrum = np.zeros(M, dtype=np.complex128)
    spectrum[:K + 1] = f.coeffs[K:]
    spectrum[M - K:] = f.coeffs[:K]
    return spectrum


def to_physical(f: SpectralField) -> np.ndarray:
    """Complex values f(x_j) on the M-point grid"""
    return sp_fft.ifft(_full_spectrum(f), norm="forward")


def reality_defect(f: SpectralField) -> float:
    """max |Im f(x_j)| on the product grid"""
    return float(np.max(np.abs(to_physical(f).imag)))


def dealiased_product(fs: Sequence[SpectralField]) -> SpectralField:
    """Alias-free product of two or three fields, truncated to |k| <= K"""

    fs = list(fs)
    if len(fs) not in (2, 3):
        raise InvalidParameterError(f"dealiased_product takes 2 or 3 factors, got {len(fs)}")
    _require_same_grid(*fs)
    grid = fs[0].grid
    K, M = grid.K, grid.M

    real = all(f.real_flag for f in fs)
    values: Dict[int, np.ndarray] = {}

    if real:
        for f in fs:
            if id(f) not in values:
                half = np.zeros(M // 2 + 1, dtype=np.complex128)
                half[:K + 1] = f.coeffs[K:]
                values[id(f)] = sp_fft.irfft(half, n=M, norm="forward")
        product = values[id(fs[0])].copy()
        for f in fs[1:]:
            product *= values[id(f)]
        spectrum = sp_fft.rfft(product, norm="forward")
        return _from_nonnegative(grid, spectrum[:K + 1])

    for f in fs:
        if id(f) not in values:
            values[id(f)] = to_physical(f)
    product = values[id(fs[0])].copy()
    for f in fs[1:]:
        product *= values[id(f)]
    spectrum = sp_fft.fft(product, norm="forward")
    coeffs = np.concatenate([spectrum[M - K:], spectrum[:K + 1]])
    return SpectralField(grid=grid, coeffs=coeffs, real_flag=False)


def fields_close(f: SpectralField, g: SpectralField) -> float:
    """Relative L^2 distance ||f - g|| / max(||f||, ||g||), 0 when both vanish"""
    _require_same_grid(f, g)
    scale = max(l2_norm(f), l2_norm(g))
    if scale == 0.0:
        return 0.0
    return l2_norm(f - g) / scale


__all__: List[str] = [
    "BandSide", "GridSpec", "SobolevIndex", "SpectralField",
    "grid_new", "zeros", "from_modes", "random_field",
    "apply_airy", "inv_dx", "project_nonzero", "zero_mode", "mean_of_product",
    "band_project", "regrid", "sobolev_norm", "l2_norm", "inner_product",
    "to_physical", "reality_defect", "dealiased_product", "fields_close",
]
