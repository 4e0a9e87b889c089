"""
Jet - 전진 모드 자동미분용 값/도함수 운반체

Jet은 스칼라 값 `val`과 고정 차원의 기울기 벡터 `grad`를 함께 전파합니다.
모델 함수는 float와 Jet을 모두 받을 수 있도록 이 모듈의 `sin`, `cos`,
`arctan`, `absolute`를 사용해야 합니다.

Usage:
    from tdo_mpc.core.jet import Jet, seed

    x, y = seed([1.0, 2.0])
    f = x * x + sin(y)
    f.val, f.grad  # (1 + sin 2, [2, cos 2])
"""

from __future__ import annotations

from typing import Iterable, Union

import numpy as np

Scalar = Union[float, int, np.floating]


class Jet:
    """값과 기울기를 함께 전달하는 dual number"""

    __slots__ = ("val", "grad")

    def __init__(self, val: Scalar, grad: np.ndarray) -> None:
        self.val = float(val)
        self.grad = np.asarray(grad, dtype=float)

    @property
    def dim(self) -> int:
        """seed 차원"""
        return self.grad.shape[0]

    def _lift(self, other: "Jet | Scalar") -> "Jet":
        if isinstance(other, Jet):
            if other.grad.shape != self.grad.shape:
                raise ValueError(
                    f"Jet seed 차원 불일치: {self.grad.shape} vs {other.grad.shape}"
                )
            return other
        return Jet(other, np.zeros_like(self.grad))

    # ========== 산술 ==========

    def __add__(self, other: "Jet | Scalar") -> "Jet":
        o = self._lift(other)
        return Jet(self.val + o.val, self.grad + o.grad)

    __radd__ = __add__

    def __sub__(self, other: "Jet | Scalar") -> "Jet":
        o = self._lift(other)
        return Jet(self.val - o.val, self.grad - o.grad)

    def __rsub__(self, other: "Jet | Scalar") -> "Jet":
        return self._lift(other) - self

    def __neg__(self) -> "Jet":
        return Jet(-self.val, -self.grad)

    def __pos__(self) -> "Jet":
        return self

    def __mul__(self, other: "Jet | Scalar") -> "Jet":
        if not isinstance(other, Jet):
            return Jet(self.val * float(other), self.grad * float(other))
        o = self._lift(other)
        return Jet(self.val * o.val, self.val * o.grad + o.val * self.grad)

    __rmul__ = __mul__

    def __truediv__(self, other: "Jet | Scalar") -> "Jet":
        if not isinstance(other, Jet):
            return Jet(self.val / float(other), self.grad / float(other))
        o = self._lift(other)
        quotient = self.val / o.val
        return Jet(quotient, (self.grad - quotient * o.grad) / o.val)

    def __rtruediv__(self, other: "Jet | Scalar") -> "Jet":
        return self._lift(other) / self

    def __pow__(self, power: Scalar) -> "Jet":
        if isinstance(power, Jet):
            raise TypeError("Jet 지수는 상수만 지원합니다")
        p = float(power)
        return Jet(self.val**p, p * self.val ** (p - 1.0) * self.grad)

    def __repr__(self) -> str:
        return f"Jet(val={self.val!r}, grad={self.grad!r})"


def seed(values: Iterable[Scalar]) -> list[Jet]:
    """각 입력을 단위 기울기 방향으로 seed한 Jet 목록 생성"""
    vals = [float(v) for v in values]
    eye = np.eye(len(vals))
    return [Jet(v, eye[i]) for i, v in enumerate(vals)]


def value(x: "Jet | Scalar") -> float:
    """Jet 또는 스칼라의 값"""
    return x.val if isinstance(x, Jet) else float(x)


def gradient_rows(outputs: Iterable["Jet | Scalar"], dim: int) -> np.ndarray:
    """출력 Jet 목록을 Jacobian 행렬(출력 × seed)로 변환"""
    rows = []
    for out in outputs:
        if isinstance(out, Jet):
            rows.append(out.grad)
        else:
            rows.append(np.zeros(dim))
    return np.vstack(rows)


# ========== 초월 함수 (float/Jet 공용) ==========


def sin(x: "Jet | Scalar") -> "Jet | float":
    if isinstance(x, Jet):
        return Jet(np.sin(x.val), np.cos(x.val) * x.grad)
    return float(np.sin(x))


def cos(x: "Jet | Scalar") -> "Jet | float":
    if isinstance(x, Jet):
        return Jet(np.cos(x.val), -np.sin(x.val) * x.grad)
    return float(np.cos(x))


def arctan(x: "Jet | Scalar") -> "Jet | float":
    if isinstance(x, Jet):
        return Jet(np.arctan(x.val), x.grad / (1.0 + x.val * x.val))
    return float(np.arctan(x))


def absolute(x: "Jet | Scalar") -> "Jet | float":
    # |x|의 0에서의 도함수는 0으로 둔다
    if isinstance(x, Jet):
        return Jet(abs(x.val), np.sign(x.val) * x.grad)
    return float(abs(x))
