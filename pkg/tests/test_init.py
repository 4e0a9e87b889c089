"""
__init__.py 모듈 테스트 (Lazy Import 검증)
"""

import pytest

import tdo_mpc


def test_lazy_imports():
    """Lazy import된 하위 모듈들이 정상적으로 로드되는지 확인"""
    diagnostics = tdo_mpc.diagnostics
    assert hasattr(diagnostics, "fit_rate")
    assert tdo_mpc.diagnostics is diagnostics

    plots = tdo_mpc.plots
    assert hasattr(plots, "plot_trajectory")


def test_core_imports():
    """Core 심볼이 정상적으로 로드되는지 확인"""
    from tdo_mpc import BenchmarkSetup, TdoController, load_config, run_scenario

    assert BenchmarkSetup is not None
    assert TdoController is not None
    assert callable(load_config)
    assert callable(run_scenario)


def test_version():
    assert tdo_mpc.__version__ == "0.1.0"


def test_invalid_attribute():
    """존재하지 않는 속성 접근 시 AttributeError 발생 확인"""
    with pytest.raises(AttributeError) as excinfo:
        _ = tdo_mpc.NonExistentAttribute

    assert "has no attribute 'NonExistentAttribute'" in str(excinfo.value)
