"""
진단 테스트 (속도 적합, 이득, Lipschitz, 소이득, LICQ/SSOSC)
"""

import numpy as np
import pytest

from tdo_mpc.core.config import HessianMode, SqpConfig
from tdo_mpc.core.diagnostics import (
    MIN_SAMPLES,
    RateFit,
    RateTrial,
    active_constraints,
    admissible_radius,
    compute_gains,
    contraction_factor,
    estimate_gamma3_slope,
    estimate_solution_lipschitz,
    fit_error_pairs,
    fit_rate,
    is_contracting,
    licq_monitor,
    rank_deficiency,
    settle_steps,
    small_gain_check,
    ssosc_monitor,
)
from tdo_mpc.core.errors import (
    DegenerateSegmentError,
    FitRefusedError,
    HypothesisViolatedError,
    LicqFailureError,
)
from tdo_mpc.core.simulation import default_roa_grid
from tdo_mpc.core.sqp import gn_hessian

from .conftest import X0_BENCHMARK, converged_solution


def _fit(q: float, eta: float, eps: float) -> RateFit:
    return RateFit(q_hat=q, eta_hat=eta, eps_hat=eps, sample_count=MIN_SAMPLES)


class TestFitErrorPairs:
    """오차 쌍 회귀 테스트"""

    def test_quadratic(self):
        """e⁺ = 0.5 e² → q = 2, η = 0.5"""
        e0 = np.logspace(-6, -2, 20)
        fit = fit_error_pairs(e0, 0.5 * e0**2, eps_hat=1e-2)
        assert fit.q_hat == pytest.approx(2.0, abs=1e-9)
        assert fit.eta_hat == pytest.approx(0.5, rel=1e-8)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.sample_count == 20
        assert not fit.is_linear

    def test_linear(self):
        e0 = np.logspace(-5, -1, 15)
        fit = fit_error_pairs(e0, 0.3 * e0)
        assert fit.q_hat == pytest.approx(1.0, abs=1e-9)
        assert fit.is_linear

    def test_floor_excludes_pairs(self):
        """바닥값 이하의 오차는 회귀에서 제외"""
        e0 = np.logspace(-6, -2, 20)
        e1 = 0.5 * e0**2
        fit = fit_error_pairs(e0, e1, floor=1e-9)
        assert fit.sample_count == int(np.sum(e1 > 1e-9))

    def test_too_few_pairs(self):
        e0 = np.logspace(-4, -2, MIN_SAMPLES - 1)
        with pytest.raises(FitRefusedError, match="부족"):
            fit_error_pairs(e0, e0**2)

    def test_constant_errors(self):
        with pytest.raises(FitRefusedError):
            fit_error_pairs(np.full(12, 1e-3), np.full(12, 1e-6))


class TestTrialScreening:
    """시행 수렴 판정, 허용 반경 테스트"""

    # GN 시행 하나: 첫 단계에서 승수 오차가 튀고 이후 약 0.5배씩 감소
    GN_ERRORS = [9.1e-4, 4.99e-2, 7.46e-3, 3.90e-3, 2.00e-3, 1.03e-3, 5.27e-4]

    def test_settle_steps(self):
        assert settle_steps(HessianMode()) == 2
        assert settle_steps(HessianMode.parse("jn")) == 0
        assert settle_steps(HessianMode.parse("jn_aug")) == 0

    def test_multiplier_jump_after_settle(self):
        assert is_contracting(self.GN_ERRORS, settle=2)
        assert not is_contracting(self.GN_ERRORS, settle=0)

    def test_growth_after_settle(self):
        assert not is_contracting([1e-3, 5e-2, 1e-2, 2e-2], settle=2)

    def test_noise_below_floor(self):
        assert is_contracting([1e-3, 1e-9, 2e-9])
        assert not is_contracting([1e-3, float("nan")])

    @pytest.mark.parametrize(
        "outcomes, expected",
        [
            ({1e-3: [True, True], 3e-3: [True, True], 1e-2: [True, True]}, 1e-2),
            ({1e-3: [True, True], 3e-3: [True, False], 1e-2: [True, True]}, 1e-3),
            ({1e-3: [False, True], 3e-3: [True, True]}, 0.0),
        ],
    )
    def test_admissible_radius(self, outcomes, expected):
        """실패한 반경보다 큰 반경은 세지 않는다"""
        trials = [RateTrial(r, [r], ok) for r, flags in outcomes.items() for ok in flags]
        assert admissible_radius(trials) == expected


class TestFitRate:
    def test_lq_problem_refused(self, toy_instance):
        """선형-2차 문제는 한 단계에 수렴하므로 바닥값 위의 쌍이 없다"""
        with pytest.raises(FitRefusedError):
            fit_rate(toy_instance, [1.0, 0.0], HessianMode(), radii=[1e-3, 1e-2], trials=3)

    @pytest.mark.slow
    def test_josephy_newton_superlinear(self, vehicle_instance_n10, n10_solution):
        """JN 적합 차수 ≥ 1.7"""
        fit = fit_rate(
            vehicle_instance_n10,
            X0_BENCHMARK,
            HessianMode.parse("jn"),
            radii=[1e-3, 3e-3, 1e-2],
            trials=5,
            z_star=n10_solution,
        )
        assert fit.q_hat >= 1.7
        assert fit.eps_hat > 0
        assert len(fit.trials) <= 15

    @pytest.mark.slow
    def test_gauss_newton_linear(self, vehicle_instance_n10, n10_solution):
        """GN: 차수 ≈ 1, 상수 < 1"""
        fit = fit_rate(
            vehicle_instance_n10,
            X0_BENCHMARK,
            HessianMode(),
            radii=[1e-3, 3e-3, 1e-2],
            trials=10,
            z_star=n10_solution,
        )
        assert 0.9 <= fit.q_hat <= 1.3
        assert fit.eta_hat < 1.0
        assert fit.r_squared >= 0.9
        assert fit.eps_hat >= 1e-3


class TestGains:
    """ISS 이득 표 테스트"""

    def test_linear_contraction(self):
        """q ≤ 1이면 a(ℓ) = η^ℓ"""
        gains = compute_gains(_fit(1.0, 0.5, 0.1), b_hat=2.0, ells=[1, 2, 3])
        assert np.allclose(gains.a, [0.5, 0.25, 0.125])
        assert np.allclose(gains.theta, 2.0 * gains.a)
        assert np.allclose(gains.sigma, gains.theta / (1.0 - gains.a))
        assert np.allclose(gains.tau, 0.5 / (gains.sigma + 2.0))
        assert gains.valid

    def test_superlinear_contraction(self):
        """q = 2, η ε = 0.2 → a(ℓ) = 0.2^(2^ℓ − 1)"""
        assert contraction_factor(2.0, 2.0, 0.1, 1) == pytest.approx(0.2)
        assert contraction_factor(2.0, 2.0, 0.1, 2) == pytest.approx(0.2**3)
        gains = compute_gains(_fit(2.0, 2.0, 0.1), b_hat=1.0, ells=range(1, 5))
        assert np.all(np.diff(gains.a) < 0)
        assert np.all(np.diff(gains.sigma) < 0)
        assert np.all(np.diff(gains.tau) > 0)

    def test_ells_sorted(self):
        gains = compute_gains(_fit(1.0, 0.5, 0.1), b_hat=1.0, ells=[3, 1, 2])
        assert list(gains.ells) == [1, 2, 3]

    def test_derived_quantities(self):
        gains = compute_gains(_fit(1.0, 0.5, 0.2), b_hat=1.0, ells=[1, 2])
        assert np.allclose(gains.gain_slope, 2.0 * gains.sigma)
        assert gains.e0_radius == pytest.approx(0.1)
        assert np.allclose(gains.dx_radius, gains.tau * 0.2)
        assert gains.beta(3.0, 2, 2) == pytest.approx(2.0 * 0.25**2 * 3.0)
        rows = gains.rows()
        assert [r["ell"] for r in rows] == [1, 2]
        assert rows[0]["gain_slope"] == pytest.approx(2.0 * gains.sigma[0])

    def test_hypothesis_violated(self):
        with pytest.raises(HypothesisViolatedError):
            compute_gains(_fit(2.0, 20.0, 0.1), b_hat=1.0, ells=[1])
        with pytest.raises(HypothesisViolatedError):
            compute_gains(_fit(1.0, 1.0, 0.1), b_hat=1.0, ells=[1])

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            compute_gains(_fit(1.0, 0.5, 0.1), b_hat=-1.0, ells=[1])
        with pytest.raises(ValueError):
            compute_gains(_fit(1.0, 0.5, 0.1), b_hat=1.0, ells=[])


class TestSmallGain:
    """소이득 검사 테스트"""

    @pytest.fixture
    def gains(self):
        # σ(ℓ) = 1, 1/3, 1/7, ...
        return compute_gains(_fit(1.0, 0.5, 0.1), b_hat=1.0, ells=range(1, 6))

    def test_first_passing_ell(self, gains):
        result = small_gain_check(gains, xi_norm=1.0, gamma3_slope=4.0)
        assert result.satisfied
        assert result.ell_star == 3
        assert np.allclose(result.products[:3], [4.0, 4.0 / 3.0, 4.0 / 7.0])
        assert "γ₃" in result.note

    def test_not_satisfied(self, gains):
        result = small_gain_check(gains, xi_norm=1.0, gamma3_slope=1e3)
        assert not result.satisfied
        assert result.ell_star is None

    def test_gamma3_slope_on_linear_plant(self, toy_instance):
        est = estimate_gamma3_slope(
            toy_instance, toy_instance.model, [0.5, 0.0], du_radii=[1e-3, 2e-3], steps=5
        )
        assert est.slope > 0
        assert est.responses.shape == (2,)
        assert np.all(est.responses > 0)


class TestLipschitz:
    """해 사상 Lipschitz 추정 테스트"""

    def test_linear_solution_map(self, toy_instance):
        """제약이 비활성인 LQ 문제에서 해 사상은 선형 → 비율이 모두 같다"""
        params = [[x, 0.0] for x in np.linspace(0.0, 0.5, 5)]
        est = estimate_solution_lipschitz(toy_instance, params)
        assert len(est.ratios) == 4
        assert len(est.solutions) == 5
        assert est.b_hat > 0
        assert np.allclose(est.ratios, est.ratios[0], rtol=1e-4)

    def test_degenerate_segment(self, toy_instance):
        with pytest.raises(DegenerateSegmentError):
            estimate_solution_lipschitz(toy_instance, [[0.1, 0.0], [0.1, 0.0]])
        with pytest.raises(DegenerateSegmentError):
            estimate_solution_lipschitz(toy_instance, [[0.1, 0.0]])


class TestRegularity:
    """LICQ/SSOSC 모니터 테스트"""

    def test_rank_deficiency(self):
        assert rank_deficiency(np.eye(3)) == 0
        assert rank_deficiency(np.array([[1.0, 0.0], [2.0, 0.0]])) == 1
        assert rank_deficiency(np.zeros((0, 2))) == 0

    def test_no_active_constraints_at_origin(self, toy_instance):
        assert active_constraints(toy_instance, toy_instance.zero_point()).size == 0

    def test_licq_at_benchmark_solution(self, vehicle_instance_n10, n10_solution):
        report = licq_monitor(vehicle_instance_n10, n10_solution, X0_BENCHMARK)
        assert report.holds
        assert report.n_rows >= vehicle_instance_n10.n_eq

    def test_ssosc_at_benchmark_solution(self, vehicle_instance_n10, n10_solution):
        report = ssosc_monitor(vehicle_instance_n10, n10_solution, X0_BENCHMARK)
        assert report.holds
        assert report.null_dim >= 0

    def test_ssosc_with_gn_hessian(self, toy_instance):
        """제약이 비활성이면 영공간 차원 = 입력 수 × N"""
        z = toy_instance.zero_point()
        report = ssosc_monitor(toy_instance, z, [0.0, 0.0], hessian=gn_hessian(toy_instance))
        assert report.null_dim == toy_instance.horizon * toy_instance.n_u
        assert report.holds

    def test_licq_failure_blocks_ssosc(self, toy_instance, monkeypatch):
        monkeypatch.setattr("tdo_mpc.core.diagnostics.rank_deficiency", lambda rows, tol=0: 1)
        with pytest.raises(LicqFailureError) as excinfo:
            ssosc_monitor(toy_instance, toy_instance.zero_point(), [0.0, 0.0])
        assert excinfo.value.deficiency == 1

    @pytest.mark.slow
    @pytest.mark.parametrize("y0, psi0", default_roa_grid())
    def test_regular_at_grid_solutions(self, benchmark_instance, y0, psi0):
        """ROA 격자의 모든 초기 조건에서 LICQ 결손 0, SSOSC 최소 고유값 > 0"""
        x = np.array([y0, psi0, 0.0, 0.0, 0.0, 0.0])
        z = converged_solution(benchmark_instance, x)
        assert licq_monitor(benchmark_instance, z, x).deficiency == 0
        assert ssosc_monitor(benchmark_instance, z, x).min_eig > 0
