"""
Low-Regularity Integrator - unfiltered second-order scheme for KdV and its baselines
u^{n+1} = e^{-tau d^3} u^n + F[u^n] + H[u^n], with Galilean pre/post-processing for nonzero mean
"""

import math
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.services.error_management import (
    DivergenceError,
    GridMismatchError,
    InvalidParameterError,
    NonFiniteFieldError,
    PreconditionError,
)
from app.services.spectral_core import (
    GridSpec,
    SpectralField,
    apply_airy,
    dealiased_product,
    inv_dx,
    l2_norm,
    mean_of_product,
    project_nonzero,
    reality_defect,
    zero_mode,
)

logger = structlog.get_logger(__name__)

MAX_TAU = 0.5
MEAN_TOLERANCE = 1e-14


class Scheme(str, Enum):
    """Time stepping variants"""
    LRI2 = "lri2"  # linear + F + H
    LRI1 = "lri1"  # linear + F
    LINEAR = "linear"  # Airy flow only


class SchemeConfig(BaseModel):
    """Step size, scheme variant and grid"""

    model_config = ConfigDict(frozen=True)

    tau: float = Field(..., gt=0.0, le=MAX_TAU, description="Time step")
    scheme: Scheme = Field(Scheme.LRI2, description="Scheme variant")
    grid: GridSpec = Field(..., description="Spatial grid")

    @field_validator("tau")
    @classmethod
    def _finite_tau(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("tau must be finite")
        return value


class GalileanFrame(BaseModel):
    """Mean c removed from the initial data"""

    model_config = ConfigDict(frozen=True)

    c: float = 0.0

    @field_validator("c")
    @classmethod
    def _finite_c(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("Galilean shift must be finite")
        return value


class StepDiagnostics(BaseModel):
    """Per-step health of the numerical solution"""

    step: int
    time: float
    mean_drift: float
    symmetry_defect: float
    reality_defect: float
    l2_norm: float
    real_flag: bool = True


StepHook = Callable[[int, SpectralField], None]


def _require_zero_mean(u: SpectralField):
    scale = max(1.0, float(np.max(np.abs(u.coeffs))))
    if abs(zero_mode(u)) > MEAN_TOLERANCE * scale:
        raise PreconditionError(f"field must have zero mean, got mean {zero_mode(u)!r}")


def _check_tau(tau: float):
    if not (math.isfinite(tau) and 0.0 < tau <= MAX_TAU):
        raise InvalidParameterError(f"tau must lie in (0, {MAX_TAU}], got {tau}")


def compute_F(u: SpectralField, tau: float) -> SpectralField:
    """F = 1/6 P[(e^{-tau d^3} d^{-1} u)^2] - 1/6 e^{-tau d^3} P[(d^{-1} u)^2]"""

    _check_tau(tau)
    _require_zero_mean(u)

    a = inv_dx(u, 1)
    w = apply_airy(a, -tau)
    evolved_square = project_nonzero(dealiased_product([w, w]))
    square = project_nonzero(dealiased_product([a, a]))
    return (evolved_square - apply_airy(square, -tau)) * (1.0 / 6.0)


def compute_H(u: SpectralField, F: SpectralField, tau: float) -> SpectralField:
    """Second-order correction built from u and F = compute_F(u, tau)"""

    _check_tau(tau)
    _require_zero_mean(u)
    if F.grid != u.grid:
        raise GridMismatchError("F must live on the grid of u")

    a = inv_dx(u, 1)
    w = apply_airy(a, -tau)

    transport = project_nonzero(dealiased_product([w, inv_dx(F, 1)])) * (1.0 / 3.0)

    mean_square = mean_of_product(u, u)
    drift = w * ((tau / 9.0) * mean_square)

    cubic = (inv_dx(dealiased_product([w, w, w]), 1)
             - apply_airy(inv_dx(dealiased_product([a, a, a]), 1), -tau)) * (-1.0 / 54.0)

    F2 = inv_dx(F, 2)
    twisted = (inv_dx(dealiased_product([F2, w]), 2)
               - apply_airy(inv_dx(dealiased_product([apply_airy(F2, tau), a]), 2), -tau)) * (-1.0 / (27.0 * tau))

    return transport + drift + cubic + twisted


def step(u: SpectralField, cfg: SchemeConfig) -> SpectralField:
    """One step of the configured scheme"""

    if u.grid != cfg.grid:
        raise GridMismatchError(f"field grid {u.grid} does not match scheme grid {cfg.grid}")
    _require_zero_mean(u)

    linear = apply_airy(u, -cfg.tau)
    if cfg.scheme == Scheme.LINEAR:
        return linear

    F = compute_F(u, cfg.tau)
    if cfg.scheme == Scheme.LRI1:
        return linear + F

    return linear + F + compute_H(u, F, cfg.tau)


def twisted_increment(u: SpectralField, cfg: SchemeConfig) -> SpectralField:
    """e^{tau d^3}(F + H): the nonlinear increment written in the twisted variable"""
    F = compute_F(u, cfg.tau)
    return apply_airy(F + compute_H(u, F, cfg.tau), cfg.tau)


def step_count(T: float, tau: float) -> int:
    """Number of steps L with L * tau == T up to one ulp of T / tau"""

    if not (math.isfinite(T) and T >= 0.0):
        raise InvalidParameterError(f"final time must be finite and nonnegative, got {T}")
    _check_tau(tau)
    ratio = T / tau
    steps = int(round(ratio))
    if abs(ratio - steps) > np.spacing(max(ratio, 1.0)):
        raise PreconditionError(f"T={T} is not an integer multiple of tau={tau}")
    return steps


def evolve(u0: SpectralField, cfg: SchemeConfig, T: float,
           on_step: Optional[StepHook] = None,
           snapshot_every: Optional[int] = None,
           snapshot_dir: Optional[Union[str, Path]] = None) -> SpectralField:
    """Apply step L = T / tau times"""

    steps = step_count(T, cfg.tau)
    if u0.grid != cfg.grid:
        raise GridMismatchError(f"field grid {u0.grid} does not match scheme grid {cfg.grid}")
    _require_zero_mean(u0)

    writer = None
    if snapshot_every:
        from app.services.persistence import SnapshotWriter
        writer = SnapshotWriter(snapshot_dir or ".", snapshot_every, tau=cfg.tau)

    logger.debug("Evolving", steps=steps, tau=cfg.tau, scheme=cfg.scheme.value, K=cfg.grid.K)

    u = u0
    for n in range(1, steps + 1):
        try:
            u = step(u, cfg)
        except NonFiniteFieldError as e:
            logger.warning("Evolution diverged", step=n, tau=cfg.tau, scheme=cfg.scheme.value)
            raise DivergenceError(n) from e
        if on_step is not None:
            on_step(n, u)
        if writer is not None:
            writer(n, u)

    return u


def galilean_precondition(u0: SpectralField) -> "tuple[SpectralField, GalileanFrame]":
    """Split real data into its zero-mean part and the mean c"""
    if not u0.real_flag:
        raise PreconditionError("Galilean preconditioning requires real-valued data")
    return project_nonzero(u0), GalileanFrame(c=zero_mode(u0).real)


def galilean_postprocess(u: SpectralField, frame: GalileanFrame, t: float) -> SpectralField:
    """u(t, x) = u_tilde(t, x + t c) + c"""
    shifted = u.coeffs * np.exp(1j * u.grid.wavenumbers * (t * frame.c))
    if u.real_flag:
        K = u.grid.K
        shifted[:K] = np.conj(shifted[:K:-1])
    shifted[u.grid.K] = zero_mode(u) + frame.c
    return SpectralField(grid=u.grid, coeffs=shifted, real_flag=u.real_flag)


def evolve_with_mean(u0: SpectralField, cfg: SchemeConfig, T: float, **kwargs) -> SpectralField:
    """Evolve data with arbitrary mean through the Galilean frame"""
    v0, frame = galilean_precondition(u0)
    return galilean_postprocess(evolve(v0, cfg, T, **kwargs), frame, T)


class DiagnosticsRecorder:
    """on_step hook collecting StepDiagnostics"""

    def __init__(self, tau: float, every: int = 1):
        self.tau = tau
        self.every = max(1, every)
        self.records: List[StepDiagnostics] = []

    def __call__(self, n: int, u: SpectralField):
        if n % self.every:
            return
        symmetry = float(np.max(np.abs(u.coeffs - np.conj(u.coeffs[::-1]))))
        if not u.real_flag:
            logger.warning("Field lost real flag", step=n, symmetry_defect=symmetry)
        self.records.append(StepDiagnostics(
            step=n,
            time=n * self.tau,
            mean_drift=abs(zero_mode(u)),
            symmetry_defect=symmetry,
            reality_defect=reality_defect(u),
            l2_norm=l2_norm(u),
            real_flag=u.real_flag,
        ))
