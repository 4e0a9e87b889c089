"""
동역학 모델 - OCP가 사용하는 이산시간 모델 인터페이스

OCP, SQP, 진단 모듈은 이 Protocol만 사용합니다.
- VehicleModel: 자전거 모델 (벤치마크)
- LinearModel: x⁺ = A x + B u (선형-2차 검증용 예제)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from tdo_mpc.core import vehicle
from tdo_mpc.core.config import VehicleParams


@runtime_checkable
class DynamicsModel(Protocol):
    """이산시간 모델 x⁺ = f_d(x, u, d)"""

    @property
    def n_x(self) -> int: ...

    @property
    def n_u(self) -> int: ...

    def step(self, x: Sequence[float], u: Sequence[float], d: float = 0.0) -> np.ndarray:
        ...

    def linearize(
        self, x: Sequence[float], u: Sequence[float]
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """d=0에서 (x⁺, A, B)"""
        ...

    def jacobians(
        self, x: Sequence[float], u: Sequence[float]
    ) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class VehicleModel:
    """자전거 모델을 DynamicsModel로 감싼 것"""

    params: VehicleParams = field(default_factory=VehicleParams)

    @property
    def n_x(self) -> int:
        return vehicle.N_STATE

    @property
    def n_u(self) -> int:
        return vehicle.N_INPUT

    def step(self, x: Sequence[float], u: Sequence[float], d: float = 0.0) -> np.ndarray:
        return vehicle.step(x, u, d, self.params)

    def linearize(
        self, x: Sequence[float], u: Sequence[float]
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return vehicle.linearize(x, u, self.params)

    def jacobians(
        self, x: Sequence[float], u: Sequence[float]
    ) -> tuple[np.ndarray, np.ndarray]:
        return vehicle.jacobians(x, u, self.params)


@dataclass(frozen=True, eq=False)
class LinearModel:
    """
    선형 모델 x⁺ = A x + B u + e·d

    Attributes:
        a_mat: n_x×n_x
        b_mat: n_x×n_u
        e_vec: 외란 입력 방향 (None이면 외란 무시)
    """

    a_mat: np.ndarray
    b_mat: np.ndarray
    e_vec: np.ndarray | None = None

    def __post_init__(self) -> None:
        a_mat = np.atleast_2d(np.asarray(self.a_mat, dtype=float))
        b_mat = np.asarray(self.b_mat, dtype=float).reshape(a_mat.shape[0], -1)
        if a_mat.shape[0] != a_mat.shape[1]:
            raise ValueError(f"A는 정방 행렬이어야 합니다: {a_mat.shape}")
        object.__setattr__(self, "a_mat", a_mat)
        object.__setattr__(self, "b_mat", b_mat)
        if self.e_vec is not None:
            object.__setattr__(self, "e_vec", np.asarray(self.e_vec, dtype=float))

    @property
    def n_x(self) -> int:
        return self.a_mat.shape[0]

    @property
    def n_u(self) -> int:
        return self.b_mat.shape[1]

    def step(self, x: Sequence[float], u: Sequence[float], d: float = 0.0) -> np.ndarray:
        out = self.a_mat @ np.asarray(x, dtype=float) + self.b_mat @ np.asarray(u, dtype=float)
        if self.e_vec is not None:
            out = out + self.e_vec * d
        return out

    def linearize(
        self, x: Sequence[float], u: Sequence[float]
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.step(x, u), self.a_mat, self.b_mat

    def jacobians(
        self, x: Sequence[float], u: Sequence[float]
    ) -> tuple[np.ndarray, np.ndarray]:
        return self.a_mat, self.b_mat
