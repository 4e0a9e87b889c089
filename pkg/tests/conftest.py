"""
pytest 공통 fixtures
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from tdo_mpc.core.config import ExperimentConfig, OcpSettings, SqpConfig, VehicleParams
from tdo_mpc.core.controller import dare_solve, oracle_config
from tdo_mpc.core.models import LinearModel, VehicleModel
from tdo_mpc.core.ocp import OcpInstance, PrimalDualPoint, build_instance
from tdo_mpc.core.simulation import BenchmarkSetup
from tdo_mpc.core.sqp import SqpSolver

# 벤치마크 초기 상태 [y, psi, nu, omega, delta_f, delta_r]
X0_BENCHMARK = np.array([-3.7, 0.0, 0.0, 0.0, 0.0, 0.0])


def make_toy_instance(
    horizon: int = 5,
    soft: tuple[int, ...] = (),
    x_bound: float = 5.0,
    u_bound: float = 1.0,
) -> OcpInstance:
    """이중 적분기 (ts = 0.1) 위의 작은 OCP"""
    model = LinearModel(
        a_mat=np.array([[1.0, 0.1], [0.0, 1.0]]),
        b_mat=np.array([[0.005], [0.1]]),
    )
    return OcpInstance(
        model=model,
        horizon=horizon,
        q_weight=np.eye(2),
        r_weight=np.eye(1),
        qf_weight=np.eye(2) * 10.0,
        x_lb=np.full(2, -x_bound),
        x_ub=np.full(2, x_bound),
        u_lb=np.array([-u_bound]),
        u_ub=np.array([u_bound]),
        soft_indices=soft,
        penalty_rho=100.0,
    )


@pytest.fixture
def params() -> VehicleParams:
    """차량 파라미터 (기본값)"""
    return VehicleParams()


@pytest.fixture
def vehicle_model(params: VehicleParams) -> VehicleModel:
    return VehicleModel(params)


def make_vehicle_instance(horizon: int = 4) -> OcpInstance:
    """종단 집합 없이 DARE Q_f만 쓰는 차량 OCP"""
    model = VehicleModel(VehicleParams())
    settings = OcpSettings(horizon=horizon, use_terminal_set=False)
    a_mat, b_mat = model.jacobians(np.zeros(6), np.zeros(2))
    qf, _ = dare_solve(a_mat, b_mat, settings.q_matrix(), settings.r_matrix())
    return build_instance(settings, model, qf, None)


def converged_solution(instance: OcpInstance, x: np.ndarray, tol: float = 1e-10) -> PrimalDualPoint:
    """Gauss-Newton으로 접근한 뒤 Josephy-Newton으로 tol까지 다듬은 z*(x)"""
    z_gn, _ = SqpSolver(instance, SqpConfig()).solve_to_tolerance(instance.zero_point(), x)
    z, _ = SqpSolver(instance, replace(oracle_config(), kkt_tol=tol)).solve_to_tolerance(z_gn, x)
    return z


@pytest.fixture
def small_vehicle_instance() -> OcpInstance:
    """N=4 차량 OCP"""
    return make_vehicle_instance(4)


@pytest.fixture(scope="module")
def vehicle_instance_n10() -> OcpInstance:
    """N=10 차량 OCP (모듈당 한 번)"""
    return make_vehicle_instance(10)


@pytest.fixture
def toy_instance() -> OcpInstance:
    """제약 없는 것과 다름없는 선형-2차 OCP (슬랙 없음)"""
    return make_toy_instance()


@pytest.fixture
def soft_toy_instance() -> OcpInstance:
    """위치 제약을 슬랙으로 완화한 선형-2차 OCP"""
    return make_toy_instance(soft=(0,), x_bound=1.0)


@pytest.fixture
def tight_toy_instance() -> OcpInstance:
    """입력 제약이 활성화되는 선형-2차 OCP"""
    return make_toy_instance(horizon=8, u_bound=0.2)


@pytest.fixture(scope="session")
def benchmark_config() -> ExperimentConfig:
    """차선 변경 벤치마크 설정 (기본값)"""
    return ExperimentConfig()


@pytest.fixture(scope="session")
def benchmark_setup(benchmark_config: ExperimentConfig) -> BenchmarkSetup:
    """종단 요소까지 계산한 벤치마크 구성 (세션당 한 번)"""
    return BenchmarkSetup.from_config(benchmark_config)


@pytest.fixture(scope="session")
def benchmark_instance(benchmark_setup: BenchmarkSetup) -> OcpInstance:
    return benchmark_setup.build_instance()


@pytest.fixture(scope="session")
def benchmark_solution(benchmark_instance: OcpInstance) -> PrimalDualPoint:
    """x0 = [−3.7, 0, 0, 0, 0, 0]에서 완전 수렴한 해 z*"""
    return converged_solution(benchmark_instance, X0_BENCHMARK)


@pytest.fixture(scope="module")
def n10_solution(vehicle_instance_n10: OcpInstance) -> PrimalDualPoint:
    """N=10 차량 OCP의 x0 = [−3.7, 0, …]에서의 z*"""
    return converged_solution(vehicle_instance_n10, X0_BENCHMARK)


@pytest.fixture
def gn_config() -> SqpConfig:
    return SqpConfig()


@pytest.fixture
def fast_ocp_settings() -> OcpSettings:
    """짧은 구간 + 종단 집합 없음 (빠른 폐루프 테스트용)"""
    return OcpSettings(horizon=10, use_terminal_set=False)


@pytest.fixture
def temp_dir(tmp_path: Path) -> Path:
    """임시 디렉토리"""
    return tmp_path
