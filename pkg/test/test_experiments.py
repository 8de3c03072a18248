"""
Experiment tests: rough data, error measurement, order fitting and the convergence harness
"""

import math

import numpy as np
import pytest

from app.models import ConvergenceRow, RowStatus
from app.services.error_management import InsufficientRowsError, InvalidParameterError, PreconditionError
from app.services.experiments import (
    RoughDataSpec,
    baseline_separation,
    convergence_study,
    error_l2,
    error_l2_quadrature,
    fit_order,
    local_orders,
    reference_solution,
    rough_initial_data,
)
from app.services.lri_scheme import Scheme
from app.services.performance_manager import performance_manager
from app.services.spectral_core import from_modes, grid_new, random_field, sobolev_norm, zero_mode, zeros


def make_rows(taus, errors, gamma=0.4, scheme=Scheme.LRI2):
    return [
        ConvergenceRow(gamma=gamma, tau=tau, error_l2=error, modes=16, T=1.0, scheme=scheme,
                       reference_tau=2.0 ** -16)
        for tau, error in zip(taus, errors)
    ]


class TestRoughData:
    """H^gamma initial data"""

    def test_coefficients(self):
        u0 = rough_initial_data(RoughDataSpec(gamma=0.2, K=64))
        for k in (1, 2, 7, 64):
            assert u0.mode(k) == pytest.approx(0.1 * k ** -0.71, rel=1e-14)
            assert u0.mode(-k) == u0.mode(k)
        assert zero_mode(u0) == 0
        assert u0.real_flag

    def test_embedding_into_larger_grid(self):
        u0 = rough_initial_data(RoughDataSpec(gamma=0.5, K=8), grid_new(32))
        assert u0.grid.K == 32
        assert u0.mode(9) == 0
        with pytest.raises(InvalidParameterError):
            rough_initial_data(RoughDataSpec(gamma=0.5, K=64), grid_new(32))

    def test_sharp_regularity(self):
        gamma = 0.2
        bandwidths = [2 ** 8, 2 ** 10, 2 ** 12]
        fields = [rough_initial_data(RoughDataSpec(gamma=gamma, K=K)) for K in bandwidths]

        above = [sobolev_norm(u, gamma + 0.01) for u in fields]
        at = [sobolev_norm(u, gamma) for u in fields]
        assert above[1] > 1.01 * above[0]
        assert above[2] > 1.01 * above[1]
        assert above[2] / above[0] > at[2] / at[0]

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            RoughDataSpec(gamma=0.0, K=16)
        with pytest.raises(ValueError):
            RoughDataSpec(gamma=1.5, K=16)


class TestErrorMeasure:
    """L2 error of the final state"""

    def test_plancherel_matches_quadrature(self, rng):
        grid = grid_new(16)
        a, b = random_field(grid, rng), random_field(grid, rng)
        assert error_l2(a, b) == pytest.approx(error_l2_quadrature(a, b), rel=1e-12)

    def test_single_mode(self):
        grid = grid_new(8)
        eps = 1e-3
        a = from_modes(grid, {1: eps}, real=False)
        assert error_l2(a, zeros(grid, real=False)) == pytest.approx(math.sqrt(2 * math.pi) * eps, rel=1e-14)


class TestFitOrder:
    """Least-squares slopes"""

    def test_exact_power_law(self):
        taus = [2.0 ** -n for n in range(2, 7)]
        fit = fit_order(make_rows(taus, [3.0 * tau ** 0.6 for tau in taus]))
        assert fit.order == pytest.approx(0.6, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log2(3.0), abs=1e-12)
        assert fit.used_taus == taus

    def test_saturation_floor_excludes_rows(self):
        taus = [2.0 ** -n for n in range(2, 7)]
        errors = [tau ** 0.6 for tau in taus]
        fit = fit_order(make_rows(taus, errors), saturation_floor=errors[2] * 0.99)
        assert fit.used_taus == taus[:3]
        assert fit.saturation_floor == errors[2] * 0.99

    def test_noisy_power_law(self):
        rng = np.random.default_rng(2024)
        taus = [2.0 ** -n for n in range(6, 13)]
        errors = [tau ** 0.4 * (1 + 0.05 * rng.uniform(-1, 1)) for tau in taus]
        fit = fit_order(make_rows(taus, errors))
        assert fit.order == pytest.approx(0.4, abs=0.05)

    def test_too_few_rows(self):
        taus = [0.25, 0.125, 0.0625]
        with pytest.raises(InsufficientRowsError):
            fit_order(make_rows(taus[:2], [1.0, 0.5]))
        with pytest.raises(InsufficientRowsError):
            fit_order(make_rows(taus, [1.0, 0.5, 0.25]), saturation_floor=0.3)

    def test_diverged_rows_are_skipped(self):
        taus = [2.0 ** -n for n in range(2, 6)]
        rows = make_rows(taus, [tau for tau in taus])
        rows[0] = rows[0].model_copy(update={"error_l2": None, "status": RowStatus.DIVERGED, "diverged_step": 2})
        fit = fit_order(rows)
        assert fit.used_taus == taus[1:]
        assert fit.order == pytest.approx(1.0, abs=1e-12)
        assert fit.local_orders[0] is None

    def test_local_orders(self):
        rows = make_rows([0.5, 0.25, 0.125], [4.0, 1.0, 0.25])
        assert local_orders(rows) == [pytest.approx(2.0), pytest.approx(2.0)]


class TestBaselineSeparation:
    """lri2 against a baseline scheme"""

    def test_order_gap_and_dominance(self):
        taus = [2.0 ** -n for n in range(3, 8)]
        primary = make_rows(taus, [tau for tau in taus], gamma=0.8)
        baseline = make_rows(taus, [2 * math.sqrt(tau) for tau in taus], gamma=0.8, scheme=Scheme.LRI1)
        comparison = baseline_separation(primary, baseline, 0.8)
        assert comparison.order_gap == pytest.approx(0.5, abs=1e-12)
        assert comparison.primary_dominates
        assert comparison.compared_taus == taus
        assert comparison.baseline_scheme == Scheme.LRI1

    def test_no_dominance(self):
        taus = [0.25, 0.125, 0.0625]
        primary = make_rows(taus, [1.0, 0.5, 0.25])
        baseline = make_rows(taus, [1.0, 0.4, 0.2], scheme=Scheme.LRI1)
        assert not baseline_separation(primary, baseline, 0.4).primary_dominates


class TestReferenceSolution:
    """Cached fine-step references"""

    def test_refinement_precondition(self, smooth_field):
        with pytest.raises(PreconditionError):
            reference_solution(smooth_field, 0.5, 0.01, study_tau_min=0.1)

    def test_zero_horizon(self, smooth_field):
        assert reference_solution(smooth_field, 0.0, 2.0 ** -6) is smooth_field

    def test_cached(self, smooth_field):
        first = reference_solution(smooth_field, 0.25, 2.0 ** -6)
        second = reference_solution(smooth_field, 0.25, 2.0 ** -6)
        assert second is first
        metrics = performance_manager.metrics["reference_solution"]
        assert metrics.cache_hits == 1
        assert metrics.cache_misses == 1


class TestConvergenceStudy:
    """End-to-end harness on small problems"""

    taus = [0.25, 0.125, 0.0625]

    def test_small_study(self):
        report = convergence_study([0.6], self.taus, K=16, T=0.5, saturation_floor=0.0)
        assert [row.tau for row in report.rows] == self.taus
        assert report.reference_tau == 0.0625 / 16
        assert all(row.error_l2 > 0 and row.status == RowStatus.OK for row in report.rows)

        fit = report.fit_for(0.6)
        assert fit.order is not None and math.isfinite(fit.order)
        assert fit.reference_gap is not None
        assert report.baseline_rows == []

    def test_with_baseline(self):
        report = convergence_study([0.6], self.taus, K=16, T=0.5, baseline=Scheme.LRI1, saturation_floor=0.0)
        assert len(report.baseline_rows) == 3
        assert all(row.scheme == Scheme.LRI1 for row in report.baseline_rows)
        assert len(report.baseline) == 1
        assert report.baseline[0].compared_taus == self.taus

    def test_parallel_matches_serial(self):
        serial = convergence_study([0.4, 0.8], self.taus, K=8, T=0.5, saturation_floor=0.0)
        parallel = convergence_study([0.8, 0.4], self.taus, K=8, T=0.5, saturation_floor=0.0, jobs=2)
        assert [row.error_l2 for row in parallel.rows] == [row.error_l2 for row in serial.rows]

    def test_errors_nonincreasing_before_saturation(self):
        taus = [2.0 ** -n for n in range(3, 7)]
        report = convergence_study([0.4, 0.8], taus, K=16, T=0.5)
        for fit in report.fitted_orders:
            group = [row for row in report.rows
                     if row.gamma == fit.gamma and row.error_l2 > fit.saturation_floor]
            assert len(group) >= 2
            for coarse, fine in zip(group, group[1:]):
                assert fine.error_l2 <= 1.05 * coarse.error_l2

    def test_taus_must_decrease(self):
        with pytest.raises(InvalidParameterError):
            convergence_study([0.6], [0.125, 0.25], K=16, T=0.5)

    def test_reference_must_be_fine(self):
        with pytest.raises(PreconditionError):
            convergence_study([0.6], self.taus, K=16, T=0.5, tau_ref=0.0625)

    @pytest.mark.slow
    def test_order_gamma_convergence(self):
        gammas = [0.2, 0.4, 0.6, 0.8]
        taus = [2.0 ** -n for n in range(6, 13)]
        report = convergence_study(gammas, taus, K=2048, T=1.0, tau_ref=2.0 ** -16, jobs=4,
                                   baseline=Scheme.LRI1)
        for gamma in gammas:
            assert report.fit_for(gamma).order == pytest.approx(gamma, abs=0.15)

        separation = next(c for c in report.baseline if c.gamma == 0.8)
        assert separation.order_gap >= 0
        assert separation.primary_dominates
