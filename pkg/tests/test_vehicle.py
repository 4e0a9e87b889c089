"""
자전거 모델 동역학 테스트
"""

import numpy as np
import pytest

from tdo_mpc.core.config import VehicleParams
from tdo_mpc.core.models import LinearModel, VehicleModel
from tdo_mpc.core.vehicle import (
    PlantState,
    continuous_dynamics,
    jacobians,
    linearize,
    step,
    tire_force,
    wind_force,
)


def _fd_jacobians(x: np.ndarray, u: np.ndarray, p: VehicleParams, h: float = 1e-6):
    a_mat = np.empty((6, 6))
    b_mat = np.empty((6, 2))
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        a_mat[:, j] = (step(x + e, u, 0.0, p) - step(x - e, u, 0.0, p)) / (2 * h)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        b_mat[:, j] = (step(x, u + e, 0.0, p) - step(x, u - e, 0.0, p)) / (2 * h)
    return a_mat, b_mat


class TestVehicleStep:
    """한 스텝 동역학 테스트"""

    def test_origin_is_equilibrium(self, params):
        """바람이 없으면 원점은 평형점"""
        assert np.allclose(step(np.zeros(6), np.zeros(2), 0.0, params), 0.0)

    def test_euler_discretization(self, params):
        """x⁺ = x + ts·ẋ"""
        x = np.array([-1.0, 0.05, 0.3, -0.02, 0.01, -0.005])
        u = np.array([0.2, -0.1])
        expected = x + params.ts * continuous_dynamics(x, u, 10.0, params)
        assert np.allclose(step(x, u, 10.0, params), expected)

    def test_inputs_drive_steering_angles(self, params):
        """입력은 조향각 적분기로만 들어간다"""
        x_next = step(np.zeros(6), np.array([1.0, -0.5]), 0.0, params)
        assert np.allclose(x_next[:4], 0.0)
        assert x_next[4] == pytest.approx(params.ts)
        assert x_next[5] == pytest.approx(-0.5 * params.ts)

    def test_crosswind_pushes_lateral_velocity(self, params):
        """양의 풍속은 ν를 증가시키고 음의 풍속은 감소시킨다"""
        assert step(np.zeros(6), np.zeros(2), 15.0, params)[2] > 0
        assert step(np.zeros(6), np.zeros(2), -15.0, params)[2] < 0

    def test_plant_state_accepted(self, params):
        state = PlantState(y=-3.7)
        assert np.allclose(step(state, np.zeros(2), 0.0, params), step(state.to_array(), np.zeros(2), 0.0, params))


class TestForces:
    """타이어/풍력 테스트"""

    def test_tire_force_odd(self, params):
        """F(−α) = −F(α), F(0) = 0"""
        assert tire_force(0.0, params) == 0.0
        assert tire_force(-0.05, params) == pytest.approx(-tire_force(0.05, params))

    def test_tire_force_saturates(self, params):
        """|F| ≤ μ g m"""
        peak = params.mu * 9.81 * params.m
        alphas = np.linspace(-1.0, 1.0, 201)
        assert max(abs(tire_force(a, params)) for a in alphas) <= peak + 1e-9

    def test_wind_force_quadratic(self, params):
        """F_w(2d) = 4 F_w(d)"""
        assert wind_force(20.0, params) == pytest.approx(4 * wind_force(10.0, params))
        assert wind_force(-10.0, params) == pytest.approx(-wind_force(10.0, params))


class TestJacobians:
    """Jacobian 테스트"""

    def test_origin_matches_finite_difference(self, params):
        """원점에서 AD Jacobian과 차분 Jacobian 비교"""
        a_mat, b_mat = jacobians(np.zeros(6), np.zeros(2), params)
        a_fd, b_fd = _fd_jacobians(np.zeros(6), np.zeros(2), params)
        assert np.allclose(a_mat, a_fd, atol=1e-6)
        assert np.allclose(b_mat, b_fd, atol=1e-6)

    def test_off_origin_matches_finite_difference(self, params):
        x = np.array([-2.0, 0.08, 0.5, 0.1, 0.05, -0.02])
        u = np.array([0.3, 0.1])
        a_mat, b_mat = jacobians(x, u, params)
        a_fd, b_fd = _fd_jacobians(x, u, params)
        assert np.allclose(a_mat, a_fd, rtol=1e-5, atol=1e-6)
        assert np.allclose(b_mat, b_fd, rtol=1e-5, atol=1e-6)

    def test_linearize_value(self, params):
        """linearize의 x⁺는 step(d=0)과 같다"""
        x = np.array([0.1, 0.0, 0.2, 0.0, 0.01, 0.0])
        u = np.array([0.1, 0.0])
        x_next, _, _ = linearize(x, u, params)
        assert np.allclose(x_next, step(x, u, 0.0, params))

    def test_b_matrix_structure(self, params):
        _, b_mat = jacobians(np.zeros(6), np.zeros(2), params)
        assert np.allclose(b_mat[4:], params.ts * np.eye(2))
        assert np.allclose(b_mat[:4], 0.0)


class TestPlantState:
    def test_round_trip(self):
        values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        assert np.array_equal(PlantState.from_array(values).to_array(), values)

    def test_wrong_shape(self):
        with pytest.raises(ValueError, match="상태 차원"):
            PlantState.from_array([1.0, 2.0])


class TestModels:
    """DynamicsModel 구현 테스트"""

    def test_vehicle_model_dimensions(self, vehicle_model):
        assert (vehicle_model.n_x, vehicle_model.n_u) == (6, 2)

    def test_linear_model(self):
        model = LinearModel(np.array([[1.0, 0.1], [0.0, 1.0]]), [0.0, 0.1], e_vec=[0.0, 1.0])
        assert model.b_mat.shape == (2, 1)
        assert np.allclose(model.step([1.0, 1.0], [1.0], d=2.0), [1.1, 3.1])
        _, a_mat, b_mat = model.linearize([0.0, 0.0], [0.0])
        assert a_mat is model.a_mat and b_mat is model.b_mat

    def test_linear_model_non_square(self):
        with pytest.raises(ValueError, match="정방"):
            LinearModel(np.ones((2, 3)), np.ones((2, 1)))
