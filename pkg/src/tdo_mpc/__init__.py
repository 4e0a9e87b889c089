"""
TDO-MPC - 시간 분산 SQP 기반 비선형 모델 예측 제어

웜스타트된 유한 반복 최적화기를 시뮬레이션 플랜트와 결합하여 동적
보상기로 사용하는 라이브러리입니다.

구성:
- core: OCP, QP/SQP 풀이기, 제어기, 종단 요소, 시뮬레이션, 진단
- artifacts: CSV 로그, 행렬 파일, SVG 그림
- cli: `tdo-mpc` 명령

Usage:
    from tdo_mpc import BenchmarkSetup, load_config, run_scenario

    config = load_config(None)  # 차선 변경 벤치마크 기본값
    log = run_scenario(config, BenchmarkSetup.from_config(config))
    print(log.summary())

    # 그림 (matplotlib은 접근 시점에 로드)
    from tdo_mpc import plots

    plots.plot_trajectory(log, "traj.svg")
"""

from typing import TYPE_CHECKING

from tdo_mpc.core import (
    BenchmarkSetup,
    ClosedLoopLog,
    ExperimentConfig,
    HessianMode,
    SqpConfig,
    TdoController,
    load_config,
    run_scenario,
)

if TYPE_CHECKING:
    from tdo_mpc.artifacts import plots
    from tdo_mpc.core import diagnostics

__version__ = "0.1.0"

# Lazy imports for heavier submodules
_diagnostics = None
_plots = None


def __getattr__(name: str):
    """Lazy import for heavier submodules."""
    global _diagnostics, _plots

    if name == "diagnostics":
        if _diagnostics is None:
            from tdo_mpc.core import diagnostics as _diagnostics
        return _diagnostics

    if name == "plots":
        if _plots is None:
            from tdo_mpc.artifacts import plots as _plots
        return _plots

    raise AttributeError(f"module 'tdo_mpc' has no attribute '{name}'")


__all__ = [
    # Core
    "BenchmarkSetup",
    "ClosedLoopLog",
    "ExperimentConfig",
    "HessianMode",
    "SqpConfig",
    "TdoController",
    "load_config",
    "run_scenario",
    # Lazy
    "diagnostics",
    "plots",
]
