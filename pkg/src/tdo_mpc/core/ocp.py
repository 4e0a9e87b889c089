"""
OCP - 파라미터화된 최적 제어 문제의 NLP 형태와 KKT 잔차

결정 변수 w는 스테이지 k = 0..N−1마다 [µ_k, ξ_{k+1}, s_lo(k+1), s_hi(k+1)]
블록으로 배치됩니다. ξ_0는 파라미터 x로 대입되어 변수에 포함되지 않습니다.

    min  ½ Σ (ξ_kᵀQξ_k + µ_kᵀRµ_k) + ½ ξ_NᵀQ_fξ_N + ρ Σ s
    s.t. g(w, x) = f_d(ξ_k, µ_k, 0) − ξ_{k+1} = 0
         h(w)    ≤ 0   (입력 경계, 완화된 상태 경계, s ≥ 0, 종단 집합)

모든 부등식은 w에 대해 affine이므로 ∇h는 상수 행렬입니다.

KKT 잔차 F(z, x) = [∇_w L; −g; −h], 원뿔 K = R^{n_w+n_eq} × R^{n_ineq}_{≥0},
자연 잔차 π(z, x) = ‖z − Π_K[z − F(z, x)]‖.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from tdo_mpc.core.config import OcpSettings
from tdo_mpc.core.errors import ConfigError
from tdo_mpc.core.models import DynamicsModel
from tdo_mpc.core.polytope import Polytope


# ========== 원-쌍대 점과 원뿔 ==========


@dataclass
class PrimalDualPoint:
    """
    최적화기 내부 상태 z = (w, λ, v)

    Attributes:
        w: 원 변수 (입력, 상태, 슬랙)
        lam: 동역학 등식 승수
        v: 부등식 승수 (해에서 v ≥ 0)
    """

    w: np.ndarray
    lam: np.ndarray
    v: np.ndarray

    def stack(self) -> np.ndarray:
        return np.concatenate([self.w, self.lam, self.v])

    def copy(self) -> "PrimalDualPoint":
        return PrimalDualPoint(self.w.copy(), self.lam.copy(), self.v.copy())

    @property
    def dim(self) -> int:
        return self.w.shape[0] + self.lam.shape[0] + self.v.shape[0]

    def distance(self, other: "PrimalDualPoint") -> float:
        return float(np.linalg.norm(self.stack() - other.stack()))


@dataclass(frozen=True)
class ConeSpec:
    """K = R^{n_free} × R^{n_nonneg}_{≥0}"""

    n_free: int
    n_nonneg: int

    @property
    def dim(self) -> int:
        return self.n_free + self.n_nonneg

    def project(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.dim,):
            raise ValueError(f"원뿔 차원 불일치: {vec.shape} vs ({self.dim},)")
        out = vec.copy()
        out[self.n_free :] = np.maximum(out[self.n_free :], 0.0)
        return out


def project_cone(z: np.ndarray, cone: ConeSpec) -> np.ndarray:
    """Π_K: 자유 블록은 항등, 비음 블록은 max(0, ·)"""
    return cone.project(z)


@dataclass
class OcpEvaluation:
    """한 점 (z, x)에서의 OCP 함수값과 1차 도함수"""

    g: np.ndarray
    eq_jac: sp.csr_matrix
    h: np.ndarray
    cost_grad: np.ndarray
    lagrangian_grad: np.ndarray
    a_mats: list[np.ndarray]
    b_mats: list[np.ndarray]


# ========== OCP 인스턴스 ==========


@dataclass(frozen=True, eq=False)
class OcpInstance:
    """
    파라미터화된 OCP (생성 후 불변)

    Attributes:
        model: 이산시간 동역학 (d=0으로 사용)
        horizon: 예측 구간 N
        q_weight, r_weight, qf_weight: 스테이지/종단 가중치
        x_lb, x_ub, u_lb, u_ub: 상태/입력 경계
        soft_indices: 슬랙으로 완화되는 상태 성분
        penalty_rho: L1 벌점 가중치
        terminal_set: 종단 집합 A_f ξ_N ≤ b_f (None이면 없음)
    """

    model: DynamicsModel
    horizon: int
    q_weight: np.ndarray
    r_weight: np.ndarray
    qf_weight: np.ndarray
    x_lb: np.ndarray
    x_ub: np.ndarray
    u_lb: np.ndarray
    u_ub: np.ndarray
    soft_indices: tuple[int, ...] = ()
    penalty_rho: float = 1e3
    terminal_set: Polytope | None = None

    def __post_init__(self) -> None:
        for name in ("q_weight", "r_weight", "qf_weight"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("x_lb", "x_ub", "u_lb", "u_ub"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        object.__setattr__(self, "soft_indices", tuple(int(i) for i in self.soft_indices))
        self.validate()

    def validate(self) -> None:
        n_x, n_u = self.model.n_x, self.model.n_u
        if not isinstance(self.horizon, (int, np.integer)) or self.horizon < 1:
            raise ConfigError(f"horizon은 1 이상이어야 합니다: {self.horizon!r}")
        if self.q_weight.shape != (n_x, n_x) or self.qf_weight.shape != (n_x, n_x):
            raise ConfigError("Q, Q_f 차원이 상태 차원과 맞지 않습니다")
        if self.r_weight.shape != (n_u, n_u):
            raise ConfigError("R 차원이 입력 차원과 맞지 않습니다")
        if np.linalg.eigvalsh(0.5 * (self.r_weight + self.r_weight.T)).min() <= 0:
            raise ConfigError("R은 양정치여야 합니다")
        if np.linalg.eigvalsh(0.5 * (self.q_weight + self.q_weight.T)).min() < -1e-12:
            raise ConfigError("Q는 양반정치여야 합니다")
        if np.linalg.eigvalsh(0.5 * (self.qf_weight + self.qf_weight.T)).min() <= 0:
            raise ConfigError("Q_f는 양정치여야 합니다")
        if self.x_lb.shape != (n_x,) or self.x_ub.shape != (n_x,):
            raise ConfigError("상태 경계 차원이 맞지 않습니다")
        if self.u_lb.shape != (n_u,) or self.u_ub.shape != (n_u,):
            raise ConfigError("입력 경계 차원이 맞지 않습니다")
        if np.any(self.x_lb >= self.x_ub) or np.any(self.u_lb >= self.u_ub):
            raise ConfigError("경계는 lb < ub를 만족해야 합니다")
        if len(set(self.soft_indices)) != len(self.soft_indices) or any(
            i < 0 or i >= n_x for i in self.soft_indices
        ):
            raise ConfigError(f"soft_indices가 잘못되었습니다: {self.soft_indices}")
        if not self.penalty_rho > 0:
            raise ConfigError(f"penalty_rho는 양수여야 합니다: {self.penalty_rho}")
        if self.terminal_set is not None:
            if self.terminal_set.n_dim != n_x:
                raise ConfigError("종단 집합 차원이 상태 차원과 맞지 않습니다")
            if self.terminal_set.n_rows == 0 or not self.terminal_set.contains_origin_interior():
                raise ConfigError("종단 집합이 비어 있거나 원점을 내부에 포함하지 않습니다")

    # ========== 차원과 배치 ==========

    @property
    def n_x(self) -> int:
        return self.model.n_x

    @property
    def n_u(self) -> int:
        return self.model.n_u

    @property
    def n_s(self) -> int:
        """스테이지당 완화 성분 수 (슬랙은 상/하한 각각)"""
        return len(self.soft_indices)

    @property
    def block(self) -> int:
        return self.n_u + self.n_x + 2 * self.n_s

    @property
    def n_w(self) -> int:
        return self.horizon * self.block

    @property
    def n_slack(self) -> int:
        return 2 * self.n_s * self.horizon

    @property
    def n_eq(self) -> int:
        return self.horizon * self.n_x

    @property
    def stage_rows(self) -> int:
        return 2 * self.n_u + 2 * self.n_x + 2 * self.n_s

    @property
    def n_terminal(self) -> int:
        return 0 if self.terminal_set is None else self.terminal_set.n_rows

    @property
    def n_ineq(self) -> int:
        return self.horizon * self.stage_rows + self.n_terminal

    @property
    def cone(self) -> ConeSpec:
        return ConeSpec(self.n_w + self.n_eq, self.n_ineq)

    def u_index(self, k: int) -> slice:
        """µ_k (k = 0..N−1)"""
        start = k * self.block
        return slice(start, start + self.n_u)

    def x_index(self, k: int) -> slice:
        """ξ_k (k = 1..N)"""
        start = (k - 1) * self.block + self.n_u
        return slice(start, start + self.n_x)

    def slack_index(self, k: int) -> slice:
        """[s_lo, s_hi] of stage k (k = 1..N)"""
        start = (k - 1) * self.block + self.n_u + self.n_x
        return slice(start, start + 2 * self.n_s)

    def stage_row_index(self, k: int) -> slice:
        """스테이지 k(0..N−1) 부등식 행"""
        return slice(k * self.stage_rows, (k + 1) * self.stage_rows)

    def _blocks(self, w: np.ndarray) -> np.ndarray:
        return np.asarray(w, dtype=float).reshape(self.horizon, self.block)

    def states(self, w: np.ndarray, x: Sequence[float]) -> np.ndarray:
        """(N+1)×n_x 상태 궤적, 첫 행은 x"""
        blocks = self._blocks(w)
        xs = blocks[:, self.n_u : self.n_u + self.n_x]
        return np.vstack([np.asarray(x, dtype=float), xs])

    def inputs(self, w: np.ndarray) -> np.ndarray:
        return self._blocks(w)[:, : self.n_u].copy()

    def slacks(self, w: np.ndarray) -> np.ndarray:
        return self._blocks(w)[:, self.n_u + self.n_x :].reshape(-1).copy()

    # ========== 점 생성 ==========

    def zero_point(self) -> PrimalDualPoint:
        return PrimalDualPoint(np.zeros(self.n_w), np.zeros(self.n_eq), np.zeros(self.n_ineq))

    def origin_point(self) -> PrimalDualPoint:
        """
        x = 0의 KKT 점

        w = 0, λ = 0이며, 슬랙 비음 제약의 승수만 ρ입니다
        (슬랙 정류 조건 ρ − v = 0).
        """
        z = self.zero_point()
        z.v[np.asarray(self.slack_rows, dtype=int)] = self.penalty_rho
        return z

    def point_from_vector(self, vec: np.ndarray) -> PrimalDualPoint:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.cone.dim,):
            raise ValueError(f"z 차원 불일치: {vec.shape} vs ({self.cone.dim},)")
        i, j = self.n_w, self.n_w + self.n_eq
        return PrimalDualPoint(vec[:i].copy(), vec[i:j].copy(), vec[j:].copy())

    def check_point(self, z: PrimalDualPoint) -> None:
        if (
            z.w.shape != (self.n_w,)
            or z.lam.shape != (self.n_eq,)
            or z.v.shape != (self.n_ineq,)
        ):
            raise ValueError(
                f"z 차원 불일치: w {z.w.shape}, lam {z.lam.shape}, v {z.v.shape} "
                f"(기대값 {self.n_w}, {self.n_eq}, {self.n_ineq})"
            )

    # ========== 입력 선택 ==========

    @cached_property
    def selector(self) -> sp.csr_matrix:
        """Ξ: z에서 µ_0를 고르는 행 선택 행렬"""
        cols = np.arange(self.u_index(0).start, self.u_index(0).stop)
        return sp.csr_matrix(
            (np.ones(self.n_u), (np.arange(self.n_u), cols)), shape=(self.n_u, self.cone.dim)
        )

    def first_input(self, z: PrimalDualPoint) -> np.ndarray:
        return z.w[self.u_index(0)].copy()

    # ========== 비용 ==========

    @cached_property
    def cost_hessian(self) -> sp.csr_matrix:
        """blkdiag(R, Q, 0, …, R, Q_f, 0)"""
        zeros = np.zeros((2 * self.n_s, 2 * self.n_s))
        blocks = []
        for k in range(self.horizon):
            state_w = self.qf_weight if k == self.horizon - 1 else self.q_weight
            blocks.extend([self.r_weight, state_w])
            if self.n_s:
                blocks.append(zeros)
        return sp.block_diag(blocks, format="csr")

    @cached_property
    def cost_linear(self) -> np.ndarray:
        c = np.zeros(self.n_w)
        for k in range(1, self.horizon + 1):
            c[self.slack_index(k)] = self.penalty_rho
        return c

    def stage_cost(self, x: Sequence[float], u: Sequence[float]) -> float:
        """½(xᵀQx + uᵀRu)"""
        x_arr = np.asarray(x, dtype=float)
        u_arr = np.asarray(u, dtype=float)
        return float(0.5 * (x_arr @ self.q_weight @ x_arr + u_arr @ self.r_weight @ u_arr))

    def objective(self, w: np.ndarray, x: Sequence[float]) -> float:
        x_arr = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        return float(
            0.5 * x_arr @ self.q_weight @ x_arr
            + 0.5 * w @ (self.cost_hessian @ w)
            + self.cost_linear @ w
        )

    def cost_gradient(self, w: np.ndarray) -> np.ndarray:
        return self.cost_hessian @ w + self.cost_linear

    # ========== 부등식 ==========

    @cached_property
    def _stage_ineq(self) -> tuple[np.ndarray, np.ndarray]:
        """스테이지 블록 국소 행렬과 오프셋"""
        n_x, n_u, n_s = self.n_x, self.n_u, self.n_s
        local = np.zeros((self.stage_rows, self.block))
        offset = np.zeros(self.stage_rows)
        xs, s_lo, s_hi = n_u, n_u + n_x, n_u + n_x + n_s

        r = 0
        local[r : r + n_u, :n_u] = np.eye(n_u)
        offset[r : r + n_u] = -self.u_ub
        r += n_u
        local[r : r + n_u, :n_u] = -np.eye(n_u)
        offset[r : r + n_u] = self.u_lb
        r += n_u
        local[r : r + n_x, xs : xs + n_x] = np.eye(n_x)
        offset[r : r + n_x] = -self.x_ub
        for j, i in enumerate(self.soft_indices):
            local[r + i, s_hi + j] = -1.0
        r += n_x
        local[r : r + n_x, xs : xs + n_x] = -np.eye(n_x)
        offset[r : r + n_x] = self.x_lb
        for j, i in enumerate(self.soft_indices):
            local[r + i, s_lo + j] = -1.0
        r += n_x
        local[r : r + 2 * n_s, s_lo : s_lo + 2 * n_s] = -np.eye(2 * n_s)
        return local, offset

    @cached_property
    def ineq_jac(self) -> sp.csr_matrix:
        """∇_w h (상수)"""
        local, _ = self._stage_ineq
        stages = sp.block_diag([local] * self.horizon, format="csr")
        if self.terminal_set is None:
            return stages
        term = sp.lil_matrix((self.n_terminal, self.n_w))
        term[:, self.x_index(self.horizon)] = self.terminal_set.a_mat
        return sp.vstack([stages, term.tocsr()], format="csr")

    @cached_property
    def ineq_offset(self) -> np.ndarray:
        _, offset = self._stage_ineq
        parts = [np.tile(offset, self.horizon)]
        if self.terminal_set is not None:
            parts.append(-self.terminal_set.b_vec)
        return np.concatenate(parts)

    def ineq(self, w: np.ndarray) -> np.ndarray:
        """h(w) (≤ 0이면 만족)"""
        return self.ineq_jac @ np.asarray(w, dtype=float) + self.ineq_offset

    # ========== 등식 (동역학) ==========

    def linearize_dynamics(
        self, w: np.ndarray, x: Sequence[float]
    ) -> tuple[np.ndarray, sp.csr_matrix, list[np.ndarray], list[np.ndarray]]:
        """
        동역학 결함 g(w, x)와 Jacobian ∇_w g

        Returns:
            (g, E, [A_k], [B_k])
        """
        n_x, n_u = self.n_x, self.n_u
        xs = self.states(w, x)
        us = self.inputs(w)

        g = np.empty(self.n_eq)
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        a_mats: list[np.ndarray] = []
        b_mats: list[np.ndarray] = []

        def place(r0: int, c0: int, block: np.ndarray) -> None:
            rr, cc = np.indices(block.shape)
            rows.append((rr + r0).ravel())
            cols.append((cc + c0).ravel())
            vals.append(block.ravel())

        for k in range(self.horizon):
            x_next, a_mat, b_mat = self.model.linearize(xs[k], us[k])
            a_mats.append(a_mat)
            b_mats.append(b_mat)
            r0 = k * n_x
            g[r0 : r0 + n_x] = x_next - xs[k + 1]
            place(r0, self.u_index(k).start, b_mat)
            if k >= 1:
                place(r0, self.x_index(k).start, a_mat)
            place(r0, self.x_index(k + 1).start, -np.eye(n_x))

        eq_jac = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_eq, self.n_w),
        )
        return g, eq_jac, a_mats, b_mats

    def dynamics_defects(self, w: np.ndarray, x: Sequence[float]) -> np.ndarray:
        xs = self.states(w, x)
        us = self.inputs(w)
        return np.concatenate(
            [self.model.step(xs[k], us[k]) - xs[k + 1] for k in range(self.horizon)]
        )

    # ========== KKT ==========

    def evaluate(self, z: PrimalDualPoint, x: Sequence[float]) -> OcpEvaluation:
        self.check_point(z)
        g, eq_jac, a_mats, b_mats = self.linearize_dynamics(z.w, x)
        cost_grad = self.cost_gradient(z.w)
        lag_grad = cost_grad + eq_jac.T @ z.lam + self.ineq_jac.T @ z.v
        return OcpEvaluation(
            g=g,
            eq_jac=eq_jac,
            h=self.ineq(z.w),
            cost_grad=cost_grad,
            lagrangian_grad=lag_grad,
            a_mats=a_mats,
            b_mats=b_mats,
        )

    def lagrangian(self, z: PrimalDualPoint, x: Sequence[float]) -> float:
        """L(w, λ, v, x) = φ(w) + λᵀg + vᵀh"""
        return float(
            self.objective(z.w, x)
            + z.lam @ self.dynamics_defects(z.w, x)
            + z.v @ self.ineq(z.w)
        )

    def lagrangian_gradient(self, z: PrimalDualPoint, x: Sequence[float]) -> np.ndarray:
        return self.evaluate(z, x).lagrangian_grad

    def kkt_residual(self, z: PrimalDualPoint, x: Sequence[float]) -> np.ndarray:
        """F(z, x) = [∇_w L; −g; −h]"""
        ev = self.evaluate(z, x)
        return np.concatenate([ev.lagrangian_grad, -ev.g, -ev.h])

    def natural_residual(self, z: PrimalDualPoint, x: Sequence[float]) -> float:
        """π(z, x) = ‖z − Π_K[z − F(z, x)]‖₂"""
        return self.natural_residual_at(z, self.evaluate(z, x))

    def natural_residual_at(self, z: PrimalDualPoint, ev: OcpEvaluation) -> float:
        """이미 계산된 평가값으로 자연 잔차 계산"""
        vec = z.stack()
        residual = np.concatenate([ev.lagrangian_grad, -ev.g, -ev.h])
        step = vec - project_cone(vec - residual, self.cone)
        return float(np.linalg.norm(step))

    @cached_property
    def slack_rows(self) -> tuple[int, ...]:
        """슬랙 비음 제약 s ≥ 0의 행 인덱스 (콜드 스타트 작업 집합)"""
        out: list[int] = []
        for k in range(self.horizon):
            base = self.stage_row_index(k).start + 2 * self.n_u + 2 * self.n_x
            out.extend(range(base, base + 2 * self.n_s))
        return tuple(out)

    # ========== 제약 여유 ==========

    def state_margins(self, xi: Sequence[float]) -> np.ndarray:
        """[ξ − x_ub, x_lb − ξ] (음수면 만족)"""
        xi = np.asarray(xi, dtype=float)
        return np.concatenate([xi - self.x_ub, self.x_lb - xi])

    def input_margins(self, u: Sequence[float]) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.concatenate([u - self.u_ub, self.u_lb - u])

    def constraint_margins(self, z: PrimalDualPoint, x: Sequence[float]) -> np.ndarray:
        """
        보고용 원시 제약 값 (음수면 만족)

        순서: 상태 여유 (스테이지 0..N, 슬랙 미포함), 입력 여유 (0..N−1),
        종단 집합 A_f ξ_N − b_f.
        """
        self.check_point(z)
        xs = self.states(z.w, x)
        us = self.inputs(z.w)
        parts = [self.state_margins(xi) for xi in xs]
        parts.extend(self.input_margins(u) for u in us)
        if self.terminal_set is not None:
            parts.append(self.terminal_set.margins(xs[-1])[0])
        return np.concatenate(parts)


def build_instance(
    settings: OcpSettings,
    model: DynamicsModel,
    qf_weight: np.ndarray,
    terminal_set: Polytope | None,
) -> OcpInstance:
    """
    설정과 종단 요소로 OcpInstance 생성

    settings.use_terminal_set가 False면 terminal_set을 무시합니다.

    Raises:
        ConfigError: N < 1, R 비양정치, 빈 종단 집합, 차원 불일치
    """
    settings.validate()
    if model.n_x != settings.n_x or model.n_u != settings.n_u:
        raise ConfigError(
            f"모델 차원 ({model.n_x}, {model.n_u})과 OCP 설정 "
            f"({settings.n_x}, {settings.n_u})이 다릅니다"
        )
    terminal = terminal_set if settings.use_terminal_set else None
    if settings.use_terminal_set and terminal_set is None:
        raise ConfigError("종단 집합이 필요하지만 주어지지 않았습니다")
    return OcpInstance(
        model=model,
        horizon=settings.horizon,
        q_weight=settings.q_matrix(),
        r_weight=settings.r_matrix(),
        qf_weight=np.asarray(qf_weight, dtype=float),
        x_lb=np.asarray(settings.x_lb, dtype=float),
        x_ub=np.asarray(settings.x_ub, dtype=float),
        u_lb=np.asarray(settings.u_lb, dtype=float),
        u_ub=np.asarray(settings.u_ub, dtype=float),
        soft_indices=tuple(settings.soft_indices),
        penalty_rho=float(settings.penalty_rho),
        terminal_set=terminal,
    )
