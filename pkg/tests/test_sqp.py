"""
시간 분산 SQP 테스트 (Hessian, 정규화, 단일 단계, 반복, 완전 수렴)
"""

from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from tdo_mpc.core.config import HessianMode, SqpConfig
from tdo_mpc.core.errors import IterationError, NoConvergenceError, QpFailure
from tdo_mpc.core.ocp import PrimalDualPoint
from tdo_mpc.core.qp import QpSolution
from tdo_mpc.core.sqp import (
    REG_MARGIN,
    SqpSolver,
    choose_reg_delta,
    gn_hessian,
    iterate,
    jn_hessian,
    null_space_basis,
    reduced_hessian_min_eig,
    td_step,
)

from .conftest import X0_BENCHMARK

MODES = ["gn", "jn", "jn_aug"]


def _random_multipliers(instance, seed: int = 0) -> PrimalDualPoint:
    rng = np.random.default_rng(seed)
    return PrimalDualPoint(
        rng.normal(scale=0.05, size=instance.n_w),
        rng.normal(scale=1.0, size=instance.n_eq),
        np.zeros(instance.n_ineq),
    )


def _failing_qp(sub, warm=None):
    return QpSolution(
        dw=np.zeros(sub.n_var),
        pi=np.zeros(sub.n_eq),
        eta=np.zeros(sub.n_ineq),
        status="infeasible",
    )


class TestHessians:
    """Hessian 근사 테스트"""

    def test_gn_is_cost_hessian(self, toy_instance):
        assert (gn_hessian(toy_instance) != toy_instance.cost_hessian).nnz == 0

    def test_jn_equals_gn_for_linear_model(self, toy_instance):
        """선형 동역학이면 곡률 항이 0"""
        z = _random_multipliers(toy_instance)
        jn = jn_hessian(toy_instance, z, [1.0, 0.0])
        assert np.allclose(jn.toarray(), toy_instance.cost_hessian.toarray(), atol=1e-8)

    def test_jn_matches_lagrangian_gradient_difference(self, small_vehicle_instance):
        """JN Hessian 열과 ∇_w L의 중심 차분 비교"""
        inst = small_vehicle_instance
        x = np.array([-1.0, 0.03, 0.2, 0.05, 0.01, 0.0])
        z = _random_multipliers(inst, seed=4)
        hess = jn_hessian(inst, z, x).toarray()

        h = 1e-5
        for j in range(0, inst.n_w, 3):
            plus, minus = z.copy(), z.copy()
            plus.w[j] += h
            minus.w[j] -= h
            column = (inst.lagrangian_gradient(plus, x) - inst.lagrangian_gradient(minus, x)) / (2 * h)
            assert np.allclose(hess[:, j], column, rtol=1e-4, atol=1e-4), f"column {j}"

    def test_jn_symmetric(self, small_vehicle_instance):
        z = _random_multipliers(small_vehicle_instance, seed=5)
        hess = jn_hessian(small_vehicle_instance, z, X0_BENCHMARK)
        assert abs(hess - hess.T).max() <= 1e-12

    def test_jn_augmented_adds_penalty(self, small_vehicle_instance):
        """jn_augmented = jn + ρ ∇gᵀ∇g"""
        inst = small_vehicle_instance
        z = _random_multipliers(inst, seed=6)
        x = X0_BENCHMARK
        rho = 2.5
        jn = jn_hessian(inst, z, x)
        aug = jn_hessian(inst, z, x, HessianMode(kind="jn_augmented", rho_aug=rho))
        _, eq_jac, _, _ = inst.linearize_dynamics(z.w, x)
        assert np.allclose((aug - jn).toarray(), rho * (eq_jac.T @ eq_jac).toarray(), atol=1e-8)


class TestRegularization:
    """δI 정규화 테스트"""

    def test_null_space_basis(self, small_vehicle_instance):
        """∇g Z = 0, 자유 변수 열 수 = N·n_u + 슬랙 수"""
        inst = small_vehicle_instance
        z = _random_multipliers(inst)
        _, eq_jac, a_mats, b_mats = inst.linearize_dynamics(z.w, X0_BENCHMARK)
        basis = null_space_basis(inst, a_mats, b_mats)
        assert basis.shape == (inst.n_w, inst.horizon * inst.n_u + inst.n_slack)
        assert np.allclose(eq_jac @ basis, 0.0, atol=1e-10)
        assert np.linalg.matrix_rank(basis) == basis.shape[1]

    def test_choose_reg_delta(self):
        assert choose_reg_delta(1.0) == 0.0
        assert choose_reg_delta(1.0, floor=0.3) == 0.3
        assert choose_reg_delta(-0.5) == pytest.approx(0.5 + REG_MARGIN)
        assert choose_reg_delta(0.0) == pytest.approx(REG_MARGIN)

    def test_indefinite_hessian_made_positive(self, small_vehicle_instance):
        """최소 고유값 −a인 축소 Hessian에 δ = a + 1e-6을 더하면 양정치"""
        inst = small_vehicle_instance
        z = inst.zero_point()
        ev = inst.evaluate(z, X0_BENCHMARK)
        hess = inst.cost_hessian - 5.0 * sp.identity(inst.n_w, format="csr")
        min_eig = reduced_hessian_min_eig(inst, hess, ev.a_mats, ev.b_mats)
        assert min_eig < 0
        delta = choose_reg_delta(min_eig)
        shifted = hess + delta * sp.identity(inst.n_w, format="csr")
        assert reduced_hessian_min_eig(inst, shifted, ev.a_mats, ev.b_mats) > 0

    def test_gn_never_regularized(self, small_vehicle_instance):
        """GN 축소 Hessian은 R ≻ 0 덕분에 양정치"""
        inst = small_vehicle_instance
        ev = inst.evaluate(inst.zero_point(), X0_BENCHMARK)
        assert reduced_hessian_min_eig(inst, gn_hessian(inst), ev.a_mats, ev.b_mats) > 0


class TestTdStep:
    """단일 단계 T(z, x) 테스트"""

    def test_lq_exact_in_one_step(self, toy_instance):
        """선형-2차 문제에서 GN 한 단계는 해에 도달"""
        x = np.array([1.0, -0.5])
        z, report = td_step(toy_instance, toy_instance.zero_point(), x, SqpConfig())
        assert report.pi_before > 0
        assert report.pi_after <= 1e-9
        assert toy_instance.natural_residual(z, x) == pytest.approx(report.pi_after)
        assert report.reg_delta == 0.0
        assert report.mode == "gn"

    @pytest.mark.parametrize("mode", MODES)
    def test_fixed_point(self, vehicle_instance_n10, n10_solution, mode):
        """KKT 점에서 T(z*, x) ≈ z*"""
        solver = SqpSolver(vehicle_instance_n10, SqpConfig(mode=HessianMode.parse(mode)))
        z_next, _ = solver.td_step(n10_solution, X0_BENCHMARK)
        assert z_next.distance(n10_solution) <= 1e-7

    def test_qp_failure_raises(self, toy_instance, monkeypatch):
        solver = SqpSolver(toy_instance, SqpConfig())
        monkeypatch.setattr(solver.qp, "solve", _failing_qp)
        with pytest.raises(QpFailure) as excinfo:
            solver.td_step(toy_instance.zero_point(), [1.0, 0.0])
        assert excinfo.value.status == "infeasible"

    def test_dimension_check(self, toy_instance):
        bad = PrimalDualPoint(np.zeros(1), np.zeros(1), np.zeros(1))
        with pytest.raises(ValueError):
            td_step(toy_instance, bad, [0.0, 0.0], SqpConfig())


class TestIterate:
    """T_ℓ 반복 테스트"""

    def test_trace_length(self, small_vehicle_instance):
        """잔차 기록은 ℓ + 1개, 보고는 ℓ개"""
        cfg = SqpConfig(ell=3)
        _, trace = iterate(small_vehicle_instance, small_vehicle_instance.zero_point(), X0_BENCHMARK, cfg)
        assert len(trace.residuals) == 4
        assert len(trace.reports) == 3
        assert trace.active_set == trace.reports[-1].active_set

    def test_more_iterations_reduce_residual(self, small_vehicle_instance):
        inst = small_vehicle_instance
        _, t1 = iterate(inst, inst.zero_point(), X0_BENCHMARK, SqpConfig(ell=1))
        _, t4 = iterate(inst, inst.zero_point(), X0_BENCHMARK, SqpConfig(ell=4))
        assert t4.residuals[-1] < t1.residuals[-1]

    def test_partial_trace_on_failure(self, toy_instance, monkeypatch):
        """두 번째 단계에서 QP가 실패하면 첫 단계까지의 잔차를 담아 IterationError"""
        solver = SqpSolver(toy_instance, SqpConfig(ell=3))
        real_solve = solver.qp.solve
        calls = {"n": 0}

        def flaky(sub, warm=None):
            calls["n"] += 1
            return real_solve(sub, warm) if calls["n"] == 1 else _failing_qp(sub)

        monkeypatch.setattr(solver.qp, "solve", flaky)
        with pytest.raises(IterationError) as excinfo:
            solver.iterate(toy_instance.zero_point(), [1.0, 0.0])
        assert excinfo.value.status == "infeasible"
        assert len(excinfo.value.trace) == 2


class TestSolveToTolerance:
    """완전 수렴 모드 테스트"""

    def test_already_optimal(self, toy_instance):
        x = np.array([0.5, 0.0])
        solver = SqpSolver(toy_instance, SqpConfig())
        z_star, _ = solver.solve_to_tolerance(toy_instance.zero_point(), x)
        _, iterations = solver.solve_to_tolerance(z_star, x)
        assert iterations == 0

    def test_vehicle_converges_from_zero(self, vehicle_instance_n10):
        """GN은 0 시작점에서 kkt_tol까지 수렴"""
        cfg = SqpConfig()
        z, iterations = SqpSolver(vehicle_instance_n10, cfg).solve_to_tolerance(
            vehicle_instance_n10.zero_point(), X0_BENCHMARK
        )
        assert iterations >= 1
        assert vehicle_instance_n10.natural_residual(z, X0_BENCHMARK) <= cfg.kkt_tol

    def test_jn_needs_fewer_iterations(self, vehicle_instance_n10, n10_solution):
        """z* 근처 시작에서 JN 반복 수 ≤ GN 반복 수"""
        start = vehicle_instance_n10.point_from_vector(
            vehicle_instance_n10.cone.project(n10_solution.stack() + 1e-3)
        )
        counts = {}
        for mode in ("gn", "jn"):
            _, counts[mode] = SqpSolver(
                vehicle_instance_n10, SqpConfig(mode=HessianMode.parse(mode))
            ).solve_to_tolerance(start, X0_BENCHMARK)
        assert counts["jn"] <= counts["gn"]

    def test_iteration_cap(self, small_vehicle_instance):
        cfg = replace(SqpConfig(), max_iter=1)
        with pytest.raises(NoConvergenceError) as excinfo:
            SqpSolver(small_vehicle_instance, cfg).solve_to_tolerance(
                small_vehicle_instance.zero_point(), X0_BENCHMARK
            )
        assert len(excinfo.value.trace) == 2

    def test_qp_failure_becomes_no_convergence(self, toy_instance, monkeypatch):
        solver = SqpSolver(toy_instance, SqpConfig())
        monkeypatch.setattr(solver.qp, "solve", _failing_qp)
        with pytest.raises(NoConvergenceError, match="QP 실패"):
            solver.solve_to_tolerance(toy_instance.zero_point(), [1.0, 0.0])
