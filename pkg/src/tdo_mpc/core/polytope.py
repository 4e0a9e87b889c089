"""
다면체 {ξ : A ξ ≤ b} 와 LP 기반 중복 제약 판정

LP는 scipy.optimize.linprog (HiGHS)로 풉니다.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

# 중복 판정 허용치 (|b| 기준 상대값)
REDUNDANCY_TOL = 1e-9

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def _maximize(c: np.ndarray, a_mat: np.ndarray, b_vec: np.ndarray):
    """max cᵀξ s.t. A ξ ≤ b (자유 변수)"""
    kwargs = dict(
        A_ub=a_mat,
        b_ub=b_vec,
        bounds=[(None, None)] * a_mat.shape[1],
        method="highs",
    )
    res = linprog(-np.asarray(c, dtype=float), options=_HIGHS_OPTIONS, **kwargs)
    if res.status == 4:
        # presolve가 "비유계 또는 불능"으로만 판정한 경우 simplex로 다시 구분
        res = linprog(
            -np.asarray(c, dtype=float),
            options={**_HIGHS_OPTIONS, "presolve": False},
            **kwargs,
        )
    return res


@dataclass(frozen=True, eq=False)
class Polytope:
    """
    H-표현 다면체

    Attributes:
        a_mat: 면 법선 (행 단위)
        b_vec: 오프셋
    """

    a_mat: np.ndarray
    b_vec: np.ndarray

    def __post_init__(self) -> None:
        a_mat = np.atleast_2d(np.asarray(self.a_mat, dtype=float))
        b_vec = np.asarray(self.b_vec, dtype=float).reshape(-1)
        if a_mat.shape[0] != b_vec.shape[0]:
            raise ValueError(
                f"Polytope 차원 불일치: A {a_mat.shape}, b {b_vec.shape}"
            )
        object.__setattr__(self, "a_mat", a_mat)
        object.__setattr__(self, "b_vec", b_vec)

    @property
    def n_dim(self) -> int:
        return self.a_mat.shape[1]

    @property
    def n_rows(self) -> int:
        return self.a_mat.shape[0]

    @classmethod
    def from_box(cls, lb: Sequence[float], ub: Sequence[float]) -> "Polytope":
        """lb ≤ ξ ≤ ub"""
        lb_arr = np.asarray(lb, dtype=float)
        ub_arr = np.asarray(ub, dtype=float)
        eye = np.eye(lb_arr.shape[0])
        return cls(np.vstack([eye, -eye]), np.concatenate([ub_arr, -lb_arr]))

    def intersect(self, other: "Polytope") -> "Polytope":
        return Polytope(
            np.vstack([self.a_mat, other.a_mat]),
            np.concatenate([self.b_vec, other.b_vec]),
        )

    def normalized(self) -> "Polytope":
        """각 행을 ‖a_i‖ = 1로 정규화 (0 행은 제거)"""
        norms = np.linalg.norm(self.a_mat, axis=1)
        keep = norms > 0
        return Polytope(
            self.a_mat[keep] / norms[keep, None], self.b_vec[keep] / norms[keep]
        )

    def margins(self, points: np.ndarray) -> np.ndarray:
        """A ξ − b (점마다 한 행)"""
        pts = np.atleast_2d(points)
        return pts @ self.a_mat.T - self.b_vec

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        return bool(np.all(self.margins(np.asarray(point, dtype=float))[0] <= tol))

    def contains_origin_interior(self) -> bool:
        return bool(np.all(self.b_vec > 0))

    def max_along(self, direction: Sequence[float]) -> float:
        """max dᵀξ over P (비유계면 inf, 공집합이면 -inf)"""
        res = _maximize(np.asarray(direction, dtype=float), self.a_mat, self.b_vec)
        if res.status == 3:
            return float("inf")
        if res.status == 2:
            return float("-inf")
        return float(-res.fun)

    def is_bounded(self) -> bool:
        """모든 좌표축 ± 방향의 최대값이 유한하면 유계"""
        eye = np.eye(self.n_dim)
        return all(
            np.isfinite(self.max_along(sign * eye[i]))
            for i in range(self.n_dim)
            for sign in (1.0, -1.0)
        )

    def is_empty(self) -> bool:
        res = _maximize(np.zeros(self.n_dim), self.a_mat, self.b_vec)
        return res.status == 2

    def remove_redundant(self) -> "Polytope":
        """
        정규화 후 중복 행 제거

        중복 행(같은 법선)은 가장 작은 오프셋만 남기고, 나머지 행은 하나씩
        LP로 판정합니다. 행 순서는 유지됩니다.
        """
        poly = self.normalized()
        a_mat, b_vec = poly.a_mat, poly.b_vec

        # 동일 법선: 가장 타이트한 행만 유지
        keep: list[int] = []
        for i in range(a_mat.shape[0]):
            dup = next(
                (j for j in keep if np.allclose(a_mat[i], a_mat[j], atol=1e-12)), None
            )
            if dup is None:
                keep.append(i)
            elif b_vec[i] < b_vec[dup]:
                keep[keep.index(dup)] = i
        keep.sort()

        active = list(keep)
        for i in list(keep):
            others = [j for j in active if j != i]
            if not others:
                continue
            if lp_redundancy_check(
                Polytope(a_mat[others], b_vec[others]), a_mat[i], b_vec[i]
            ):
                active.remove(i)
        return Polytope(a_mat[active], b_vec[active])

    def to_dict(self) -> dict:
        return {"a_mat": self.a_mat.tolist(), "b_vec": self.b_vec.tolist()}


def lp_redundancy_check(poly: Polytope, row: Sequence[float], offset: float) -> bool:
    """
    행 (row, offset)이 poly에 대해 중복인지 판정

    max rowᵀξ over poly ≤ offset 이면 True. LP가 비유계이면 False.
    """
    res = _maximize(np.asarray(row, dtype=float), poly.a_mat, poly.b_vec)
    if res.status == 3:
        return False
    if res.status == 2:
        # 공집합 위에서는 모든 행이 중복
        return True
    if res.status != 0:
        raise RuntimeError(f"중복 판정 LP 실패: status={res.status} ({res.message})")
    return bool(-res.fun <= offset + REDUNDANCY_TOL * max(1.0, abs(offset)))
