"""
Experiments - rough initial data, reference solutions and the convergence harness
Reproduces order-gamma accuracy for H^gamma data by fitting log-log error curves
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from app.models import (
    BaselineComparison,
    ConvergenceReport,
    ConvergenceRow,
    FittedOrder,
    RowStatus,
)
from app.services.error_management import (
    DivergenceError,
    InsufficientRowsError,
    InvalidParameterError,
    PreconditionError,
)
from app.services.lri_scheme import Scheme, SchemeConfig, evolve, step_count
from app.services.performance_manager import array_digest, performance_manager, run_parallel
from app.services.spectral_core import GridSpec, SpectralField, grid_new, l2_norm, to_physical

logger = structlog.get_logger(__name__)

REFERENCE_REFINEMENT = 16
SATURATION_FACTOR = 10.0
MIN_FIT_ROWS = 3


class RoughDataSpec(BaseModel):
    """u0 = amplitude * sum_{0 < |k| <= K} |k|^{-offset - gamma} exp(ikx)"""

    model_config = ConfigDict(frozen=True)

    gamma: float = Field(..., gt=0.0, le=1.0)
    K: int = Field(..., ge=1)
    amplitude: float = 0.1
    offset: float = 0.51


def rough_initial_data(spec: RoughDataSpec, grid: Optional[GridSpec] = None) -> SpectralField:
    """Real, even, zero-mean data in H^gamma but not in H^{gamma + 0.01}"""

    grid = grid or grid_new(spec.K)
    if grid.K < spec.K:
        raise InvalidParameterError(f"grid bandwidth {grid.K} below data bandwidth {spec.K}")

    k = np.abs(grid.wavenumbers)
    coeffs = np.zeros(grid.size, dtype=np.complex128)
    support = (k > 0) & (k <= spec.K)
    coeffs[support] = spec.amplitude * np.power(k[support], -(spec.offset + spec.gamma))
    return SpectralField(grid=grid, coeffs=coeffs, real_flag=True)


def error_l2(a: SpectralField, b: SpectralField) -> float:
    """||a - b||_{L^2} by Plancherel"""
    return l2_norm(a - b)


def error_l2_quadrature(a: SpectralField, b: SpectralField) -> float:
    """||a - b||_{L^2} by trapezoidal quadrature on the product grid"""
    values = to_physical(a - b)
    return math.sqrt(2.0 * math.pi / a.grid.M * float(np.sum(np.abs(values) ** 2)))


def reference_solution(u0: SpectralField, T: float, tau_ref: float,
                       study_tau_min: Optional[float] = None) -> SpectralField:
    """lri2 solution at tau_ref, cached by (u0 digest, T, tau_ref)"""

    if study_tau_min is not None and tau_ref > study_tau_min / REFERENCE_REFINEMENT:
        raise PreconditionError(
            f"reference step {tau_ref} must be at most {REFERENCE_REFINEMENT}x finer than {study_tau_min}")
    step_count(T, tau_ref)

    key = (array_digest(u0.coeffs), u0.grid.K, u0.grid.M, float(T), float(tau_ref))
    cfg = SchemeConfig(tau=tau_ref, scheme=Scheme.LRI2, grid=u0.grid)
    return performance_manager.cached_operation(key, lambda: evolve(u0, cfg, T), name="reference_solution")


def reference_gap(u0: SpectralField, T: float, tau_ref: float) -> float:
    """||ref(tau_ref) - ref(2 tau_ref)||, the self-consistency of the reference"""
    return error_l2(reference_solution(u0, T, tau_ref), reference_solution(u0, T, 2.0 * tau_ref))


def _build_data(gamma: float, K: int, M: int, amplitude: float, offset: float) -> SpectralField:
    return rough_initial_data(RoughDataSpec(gamma=gamma, K=K, amplitude=amplitude, offset=offset),
                              GridSpec(K=K, M=M))


def _reference_task(task: Tuple) -> Tuple[np.ndarray, Optional[float]]:
    gamma, K, M, T, tau_ref, amplitude, offset, self_consistency = task
    u0 = _build_data(gamma, K, M, amplitude, offset)
    reference = reference_solution(u0, T, tau_ref)
    gap = reference_gap(u0, T, tau_ref) if self_consistency and 2.0 * tau_ref <= 0.5 else None
    logger.info("Reference ready", gamma=gamma, tau_ref=tau_ref, gap=gap)
    return np.asarray(reference.coeffs), gap


def _cell_task(task: Tuple) -> Tuple[str, object]:
    gamma, K, M, T, tau, scheme, amplitude, offset = task
    u0 = _build_data(gamma, K, M, amplitude, offset)
    cfg = SchemeConfig(tau=tau, scheme=Scheme(scheme), grid=u0.grid)
    try:
        result = evolve(u0, cfg, T)
    except DivergenceError as e:
        return RowStatus.DIVERGED.value, e.step
    logger.debug("Cell finished", gamma=gamma, tau=tau, scheme=scheme)
    return RowStatus.OK.value, np.asarray(result.coeffs)


def _check_taus(taus: Sequence[float], T: float):
    if len(taus) == 0:
        raise InvalidParameterError("at least one time step is required")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise InvalidParameterError("taus must be strictly decreasing")
    for tau in taus:
        step_count(T, tau)


def local_orders(rows: Sequence[ConvergenceRow]) -> List[Optional[float]]:
    """Observed order between consecutive steps, None where an error is missing"""
    orders: List[Optional[float]] = []
    for coarse, fine in zip(rows, rows[1:]):
        if not (coarse.error_l2 and fine.error_l2):
            orders.append(None)
            continue
        orders.append(math.log2(coarse.error_l2 / fine.error_l2) / math.log2(coarse.tau / fine.tau))
    return orders


def fit_order(rows: Sequence[ConvergenceRow], saturation_floor: float = 0.0) -> FittedOrder:
    """Least-squares slope of log2(error) against log2(tau) over rows above the floor"""

    usable = [row for row in rows
              if row.status == RowStatus.OK and row.error_l2 is not None and row.error_l2 > saturation_floor]
    if len(usable) < MIN_FIT_ROWS:
        raise InsufficientRowsError(
            f"{len(usable)} rows above saturation floor {saturation_floor:g}, need {MIN_FIT_ROWS}")

    x = np.log2([row.tau for row in usable])
    y = np.log2([row.error_l2 for row in usable])
    slope, intercept = np.polyfit(x, y, 1)

    return FittedOrder(
        gamma=usable[0].gamma,
        order=float(slope),
        intercept=float(intercept),
        used_taus=[row.tau for row in usable],
        saturation_floor=saturation_floor,
        local_orders=local_orders(rows),
    )


def baseline_separation(primary: Sequence[ConvergenceRow], baseline: Sequence[ConvergenceRow],
                        gamma: float, saturation_floor: float = 0.0) -> BaselineComparison:
    """Order gap and error dominance of the primary scheme over a baseline"""

    primary = [row for row in primary if row.gamma == gamma]
    baseline = [row for row in baseline if row.gamma == gamma]
    baseline_by_tau = {row.tau: row for row in baseline}

    compared = [row.tau for row in primary
                if row.tau in baseline_by_tau and row.error_l2 is not None
                and baseline_by_tau[row.tau].error_l2 is not None and row.error_l2 > saturation_floor]
    dominates = bool(compared) and all(
        next(r for r in primary if r.tau == tau).error_l2 <= baseline_by_tau[tau].error_l2 for tau in compared)

    def _order(rows):
        try:
            return fit_order(rows, saturation_floor).order
        except InsufficientRowsError:
            return None

    primary_order = _order(primary)
    baseline_order = _order(baseline)
    gap = None if primary_order is None or baseline_order is None else primary_order - baseline_order

    return BaselineComparison(
        gamma=gamma,
        primary_scheme=primary[0].scheme if primary else Scheme.LRI2,
        baseline_scheme=baseline[0].scheme if baseline else Scheme.LRI1,
        primary_order=primary_order,
        baseline_order=baseline_order,
        order_gap=gap,
        compared_taus=compared,
        primary_dominates=dominates,
    )


def convergence_study(gammas: Sequence[float], taus: Sequence[float], K: int, T: float,
                      scheme: Scheme = Scheme.LRI2,
                      tau_ref: Optional[float] = None,
                      jobs: int = 1,
                      baseline: Optional[Scheme] = None,
                      saturation_floor: Optional[float] = None,
                      self_consistency: bool = True,
                      amplitude: float = 0.1,
                      offset: float = 0.51) -> ConvergenceReport:
    """Error of each (gamma, tau) cell against a fine lri2 reference, with fitted orders"""

    taus = [float(tau) for tau in taus]
    _check_taus(taus, T)
    tau_ref = tau_ref if tau_ref is not None else taus[-1] / REFERENCE_REFINEMENT
    if tau_ref > taus[-1] / REFERENCE_REFINEMENT:
        raise PreconditionError(
            f"reference step {tau_ref} must be at most {REFERENCE_REFINEMENT}x finer than {taus[-1]}")
    step_count(T, tau_ref)

    grid = grid_new(K)
    gammas = sorted(float(g) for g in gammas)
    schemes = [scheme] + ([baseline] if baseline is not None else [])

    logger.info("Starting convergence study", gammas=gammas, taus=len(taus), K=K, T=T,
                scheme=scheme.value, tau_ref=tau_ref, jobs=jobs)

    with performance_manager.timed("references"):
        references = run_parallel(
            _reference_task,
            [(g, K, grid.M, T, tau_ref, amplitude, offset, self_consistency) for g in gammas],
            jobs,
        )

    cells = [(g, K, grid.M, T, tau, s.value, amplitude, offset) for s in schemes for g in gammas for tau in taus]
    with performance_manager.timed("cells"):
        outcomes = run_parallel(_cell_task, cells, jobs)

    reference_fields = {
        g: SpectralField(grid=grid, coeffs=coeffs, real_flag=True) for g, (coeffs, _) in zip(gammas, references)
    }
    gaps = {g: gap for g, (_, gap) in zip(gammas, references)}

    rows_by_scheme = {s: [] for s in schemes}
    for (g, _, _, _, tau, s, _, _), (status, payload) in zip(cells, outcomes):
        row = ConvergenceRow(gamma=g, tau=tau, modes=K, T=T, scheme=Scheme(s), reference_tau=tau_ref)
        if status == RowStatus.OK.value:
            result = SpectralField(grid=grid, coeffs=payload, real_flag=True)
            row = row.model_copy(update={"error_l2": error_l2(result, reference_fields[g])})
        else:
            row = row.model_copy(update={"status": RowStatus.DIVERGED, "diverged_step": payload})
            logger.warning("Cell diverged", gamma=g, tau=tau, scheme=s, step=payload)
        rows_by_scheme[Scheme(s)].append(row)

    def _ordered(rows):
        return sorted(rows, key=lambda r: (r.gamma, -r.tau))

    rows = _ordered(rows_by_scheme[scheme])
    baseline_rows = _ordered(rows_by_scheme[baseline]) if baseline is not None else []

    fits: List[FittedOrder] = []
    comparisons: List[BaselineComparison] = []
    for g in gammas:
        gap = gaps[g]
        floor = saturation_floor if saturation_floor is not None else SATURATION_FACTOR * (gap or 0.0)
        group = [row for row in rows if row.gamma == g]
        try:
            fit = fit_order(group, floor)
        except InsufficientRowsError as e:
            fit = FittedOrder(gamma=g, saturation_floor=floor, local_orders=local_orders(group), note=str(e))
        errors = [row.error_l2 for row in group if row.error_l2 is not None]
        if gap is not None and errors and gap >= 0.1 * min(errors):
            fit = fit.model_copy(update={"note": "reference not converged: gap exceeds 10% of smallest error"})
        fits.append(fit.model_copy(update={"reference_gap": gap}))
        logger.info("Fitted order", gamma=g, order=fit.order, rows=len(fit.used_taus), floor=floor)

        if baseline is not None:
            comparisons.append(baseline_separation(rows, baseline_rows, g, floor))

    return ConvergenceReport(
        scheme=scheme,
        modes=K,
        T=T,
        reference_tau=tau_ref,
        rows=rows,
        fitted_orders=fits,
        baseline_rows=baseline_rows,
        baseline=comparisons,
        performance=performance_manager.get_performance_report(),
    )
