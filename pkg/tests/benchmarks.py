"""
TDO-MPC 계산 시간 벤치마크

pytest-benchmark를 사용하여 샘플링 시점당 계산 시간을 측정합니다.

실행 방법:
    # 벤치마크만 실행
    rye run pytest tests/benchmarks.py -v

    # 상세 통계 포함
    rye run pytest tests/benchmarks.py -v --benchmark-verbose

    # 결과 저장
    rye run pytest tests/benchmarks.py --benchmark-save=baseline

    # 이전 결과와 비교
    rye run pytest tests/benchmarks.py --benchmark-compare=baseline
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import pytest

from tdo_mpc.core.config import HessianMode, SqpConfig
from tdo_mpc.core.controller import LqrController, OptimalMpcController, TdoController
from tdo_mpc.core.ocp import OcpInstance, PrimalDualPoint
from tdo_mpc.core.sqp import SqpSolver, jn_hessian

from .conftest import X0_BENCHMARK, converged_solution, make_vehicle_instance

pytestmark = pytest.mark.benchmark


@pytest.fixture(scope="module")
def instance() -> OcpInstance:
    """N=30 차량 OCP (종단 집합 없음)"""
    return make_vehicle_instance(30)


@pytest.fixture(scope="module")
def z_star(instance: OcpInstance) -> PrimalDualPoint:
    return converged_solution(instance, X0_BENCHMARK)


# === 핵심 케이스 ===
class TestControllerBenchmark:
    """샘플링 시점당 제어 계산 시간"""

    @pytest.mark.parametrize("mode", ["gn", "jn"])
    @pytest.mark.parametrize("ell", [1, 2])
    def test_tdo_step(
        self,
        benchmark: Callable,
        instance: OcpInstance,
        z_star: PrimalDualPoint,
        mode: str,
        ell: int,
    ) -> None:
        """TDO 한 시점 (웜스타트 z*에서 ℓ번 반복)"""
        cfg = SqpConfig(mode=HessianMode.parse(mode), ell=ell)

        def _run():
            return TdoController(instance, cfg, z=z_star.copy()).control(X0_BENCHMARK)

        step = benchmark(_run)
        assert step.u.shape == (2,)

    def test_full_solve(
        self,
        benchmark: Callable,
        instance: OcpInstance,
        z_star: PrimalDualPoint,
    ) -> None:
        """완전 수렴 MPC 한 시점 (z* 근처 시작)"""
        x = X0_BENCHMARK + np.array([0.05, 0.0, 0.0, 0.0, 0.0, 0.0])

        def _run():
            return OptimalMpcController(instance, SqpConfig(), z=z_star.copy()).control(x)

        step = benchmark(_run)
        assert instance.natural_residual(step.z, x) <= 1e-8

    def test_lqr(self, benchmark: Callable, instance: OcpInstance) -> None:
        """LQR 기준선"""
        ctrl = LqrController.from_instance(instance)
        step = benchmark(ctrl.control, X0_BENCHMARK)
        assert step.u.shape == (2,)


class TestKernelBenchmark:
    """SQP 구성 요소별 시간"""

    def test_evaluate(self, benchmark: Callable, instance: OcpInstance, z_star: PrimalDualPoint) -> None:
        """AD 선형화 + 비용/제약 평가"""
        ev = benchmark(instance.evaluate, z_star, X0_BENCHMARK)
        assert len(ev.a_mats) == instance.horizon

    def test_jn_hessian(self, benchmark: Callable, instance: OcpInstance, z_star: PrimalDualPoint) -> None:
        """Josephy-Newton 곡률 (스테이지별 유한 차분)"""
        hess = benchmark(jn_hessian, instance, z_star, X0_BENCHMARK)
        assert hess.shape == (instance.n_w, instance.n_w)

    def test_td_step(self, benchmark: Callable, instance: OcpInstance, z_star: PrimalDualPoint) -> None:
        """QP 구성 + 풀이"""
        solver = SqpSolver(instance, SqpConfig())
        z_next, report = benchmark(solver.td_step, z_star, X0_BENCHMARK)
        assert report.qp_status == "solved"
