"""
TDO-MPC Core - 시간 분산 최적화 기반 비선형 MPC

구성:
- jet, vehicle, models: 전진 모드 AD와 자전거 모델 동역학
- ocp: 다중 사격 OCP와 일반화 방정식 형태의 최적성 조건
- qp, sqp: active-set QP 풀이기와 시간 분산 SQP
- controller: TDO-MPC, 완전 수렴 MPC, LQR
- invariant_set: 종단 비용과 최대 허용 불변 집합
- simulation, worker: 폐루프 시뮬레이션과 스윕
- diagnostics: 수렴 속도, ISS 이득, 정칙성 모니터

Usage:
    from tdo_mpc.core import BenchmarkSetup, load_config, run_scenario

    config = load_config("experiment.json")
    log = run_scenario(config, BenchmarkSetup.from_config(config))
"""

from tdo_mpc.core.config import (
    ExperimentConfig,
    HessianMode,
    OcpSettings,
    ScenarioConfig,
    SqpConfig,
    VehicleParams,
    load_config,
)
from tdo_mpc.core.controller import LqrController, OptimalMpcController, TdoController, initialize
from tdo_mpc.core.errors import ConfigError, TdoError
from tdo_mpc.core.ocp import OcpInstance, PrimalDualPoint, build_instance
from tdo_mpc.core.simulation import BenchmarkSetup, ClosedLoopLog, run_scenario
from tdo_mpc.core.sqp import SqpSolver

__all__ = [
    "BenchmarkSetup",
    "ClosedLoopLog",
    "ConfigError",
    "ExperimentConfig",
    "HessianMode",
    "LqrController",
    "OcpInstance",
    "OcpSettings",
    "OptimalMpcController",
    "PrimalDualPoint",
    "ScenarioConfig",
    "SqpConfig",
    "SqpSolver",
    "TdoController",
    "TdoError",
    "VehicleParams",
    "build_instance",
    "initialize",
    "load_config",
    "run_scenario",
]
