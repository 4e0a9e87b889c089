"""
자전거 모델 - 차량 횡방향 동역학

상태 x = [y, psi, nu, omega, delta_f, delta_r], 입력 u = [ddelta_f, ddelta_r],
외란 d는 측면 풍속(m/s)입니다. 종방향 속도 s는 상수이며 이산화는 전진 Euler입니다.

모든 모델 함수는 float와 Jet을 함께 받으므로, Jacobian은 Jet seed로 정확히
계산됩니다.

Usage:
    from tdo_mpc.core.vehicle import VehicleParams, step, jacobians

    params = VehicleParams()
    x_next = step(x, u, 15.0, params)
    a_mat, b_mat = jacobians(x, u, params)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from tdo_mpc.core.config import STATE_NAMES, VehicleParams
from tdo_mpc.core.jet import Jet, absolute, arctan, cos, gradient_rows, seed, sin, value

GRAVITY = 9.81
N_STATE = 6
N_INPUT = 2

__all__ = [
    "GRAVITY",
    "N_INPUT",
    "N_STATE",
    "PlantState",
    "VehicleParams",
    "continuous_dynamics",
    "jacobians",
    "linearize",
    "step",
    "tire_force",
    "wind_force",
]


@dataclass(frozen=True)
class PlantState:
    """
    플랜트 상태 (순서는 항상 [y, psi, nu, omega, delta_f, delta_r])

    Attributes:
        y: 횡방향 위치 (m)
        psi: 요 각도 (rad)
        nu: 횡방향 속도 (m/s)
        omega: 요 레이트 (rad/s)
        delta_f, delta_r: 앞/뒤 조향각 (rad)
    """

    y: float = 0.0
    psi: float = 0.0
    nu: float = 0.0
    omega: float = 0.0
    delta_f: float = 0.0
    delta_r: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in STATE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "PlantState":
        arr = np.asarray(values, dtype=float)
        if arr.shape != (N_STATE,):
            raise ValueError(f"상태 차원은 {N_STATE}이어야 합니다: {arr.shape}")
        return cls(*(float(v) for v in arr))


def tire_force(alpha, p: VehicleParams):
    """Pacejka 횡력 F(α) = μ·g·m·sin(C·arctan(B·α))"""
    return p.mu * GRAVITY * p.m * sin(p.c_tire * arctan(p.b_tire * alpha))


def wind_force(d, p: VehicleParams):
    """측면 풍력 F_w = ½ ρ C_d A |d| d"""
    return 0.5 * p.rho * p.cd * p.area * absolute(d) * d


def _rhs(x: Sequence, u: Sequence, d, p: VehicleParams) -> list:
    """연속시간 우변 (float/Jet 공용)"""
    _, psi, nu, omega, delta_f, delta_r = x
    s = p.s_long

    alpha_f = delta_f - arctan((nu + p.lf * omega) / s)
    alpha_r = delta_r - arctan((nu - p.lr * omega) / s)
    f_front = tire_force(alpha_f, p) * cos(delta_f)
    f_rear = tire_force(alpha_r, p) * cos(delta_r)

    return [
        s * sin(psi) + nu * cos(psi),
        omega,
        -s * omega + (f_front + f_rear + wind_force(d, p)) / p.m,
        (f_front * p.lf - f_rear * p.lr) / p.izz,
        u[0],
        u[1],
    ]


def continuous_dynamics(
    x: "PlantState | Sequence[float]",
    u: Sequence[float],
    d: float,
    p: VehicleParams,
) -> np.ndarray:
    """
    상태 미분 ẋ 계산

    Args:
        x: 상태 (PlantState 또는 6-벡터)
        u: 조향 속도 입력 2-벡터 (rad/s)
        d: 측면 풍속 (m/s)
        p: 차량 파라미터

    Returns:
        ẋ 6-벡터
    """
    if isinstance(x, PlantState):
        x = x.to_array()
    return np.array([value(v) for v in _rhs(list(x), list(u), d, p)], dtype=float)


def step(
    x: "PlantState | Sequence[float]",
    u: Sequence[float],
    d: float,
    p: VehicleParams,
) -> np.ndarray:
    """전진 Euler 한 스텝: x⁺ = x + ts·ẋ"""
    if isinstance(x, PlantState):
        x = x.to_array()
    x_arr = np.asarray(x, dtype=float)
    return x_arr + p.ts * continuous_dynamics(x_arr, u, d, p)


def linearize(
    x: Sequence[float], u: Sequence[float], p: VehicleParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    d=0에서 한 스텝 값과 Jacobian을 한 번의 Jet 평가로 계산

    Returns:
        (x⁺, A, B): A = ∂x⁺/∂x (6×6), B = ∂x⁺/∂u (6×2)
    """
    jets = seed(list(np.asarray(x, dtype=float)) + list(np.asarray(u, dtype=float)))
    xj, uj = jets[:N_STATE], jets[N_STATE:]
    rhs = _rhs(xj, uj, 0.0, p)
    out: list[Jet] = [xi + p.ts * fi for xi, fi in zip(xj, rhs)]

    jac = gradient_rows(out, N_STATE + N_INPUT)
    x_next = np.array([o.val for o in out], dtype=float)
    return x_next, jac[:, :N_STATE], jac[:, N_STATE:]


def jacobians(
    x: "PlantState | Sequence[float]", u: Sequence[float], p: VehicleParams
) -> tuple[np.ndarray, np.ndarray]:
    """step의 정확한 Jacobian (A, B) at (x, u, d=0)"""
    if isinstance(x, PlantState):
        x = x.to_array()
    _, a_mat, b_mat = linearize(x, u, p)
    return a_mat, b_mat
