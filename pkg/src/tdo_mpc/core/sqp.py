"""
시간 분산 SQP - Hessian 근사, 단일 단계 T(z, x), 반복 T_ℓ

지원 Hessian:
- gauss_newton: 비용 Hessian blkdiag(R, Q, …, Q_f), 슬랙 블록은 0
- josephy_newton: ∇²_w L (동역학 곡률은 AD 기울기의 중심 차분)
- jn_augmented: ∇²_w L + ρ_aug ∇gᵀ∇g

축소 Hessian(∇g의 영공간)이 양정치가 아니면 δI 정규화를 더합니다.
갱신은 z⁺ = (w + Δw, π, η)이며 승수는 QP 승수로 완전히 교체됩니다.
선탐색과 신뢰 영역은 없습니다.

Usage:
    from tdo_mpc.core.sqp import SqpSolver, SqpConfig, HessianMode

    solver = SqpSolver(instance, SqpConfig(mode=HessianMode("josephy_newton"), ell=2))
    z_next, trace = solver.iterate(z, x)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.linalg import eigvalsh

from tdo_mpc.core.config import HessianMode, SqpConfig
from tdo_mpc.core.errors import IterationError, NoConvergenceError, QpFailure
from tdo_mpc.core.ocp import OcpEvaluation, OcpInstance, PrimalDualPoint
from tdo_mpc.core.qp import QpSolver, QpSubproblem, regularize

__all__ = [
    "HessianMode",
    "IterationTrace",
    "SqpConfig",
    "SqpSolver",
    "StepReport",
    "build_subproblem",
    "choose_reg_delta",
    "gn_hessian",
    "iterate",
    "jn_hessian",
    "null_space_basis",
    "reduced_hessian_min_eig",
    "solve_to_tolerance",
    "td_step",
]

# 축소 Hessian 최소 고유값이 이 값 이하이면 정규화
PD_THRESHOLD = 1e-8
REG_MARGIN = 1e-6


@dataclass
class StepReport:
    """td_step 한 번의 진단 정보"""

    mode: str
    pi_before: float
    pi_after: float
    active_set: tuple[int, ...]
    reg_delta: float
    min_reduced_eig: float
    qp_iterations: int
    qp_status: str

    @property
    def active_set_size(self) -> int:
        return len(self.active_set)


@dataclass
class IterationTrace:
    """iterate 결과: 잔차 [π_0, π_1, …, π_ℓ]와 단계별 보고"""

    residuals: list[float] = field(default_factory=list)
    reports: list[StepReport] = field(default_factory=list)

    @property
    def active_set(self) -> tuple[int, ...] | None:
        return self.reports[-1].active_set if self.reports else None

    @property
    def last(self) -> StepReport | None:
        return self.reports[-1] if self.reports else None


# ========== Hessian ==========


def gn_hessian(instance: OcpInstance, w: np.ndarray | None = None) -> sp.csr_matrix:
    """Gauss-Newton Hessian (w와 무관한 상수)"""
    return instance.cost_hessian.copy()


def _stage_curvature(
    instance: OcpInstance, xi: np.ndarray, mu: np.ndarray, lam: np.ndarray, h: float
) -> np.ndarray:
    """∇²_{(ξ, µ)} λᵀf_d(ξ, µ): [Aᵀλ; Bᵀλ]의 중심 차분"""
    n_x, n_u = instance.n_x, instance.n_u
    point = np.concatenate([xi, mu])
    out = np.empty((n_x + n_u, n_x + n_u))

    def grad(pt: np.ndarray) -> np.ndarray:
        _, a_mat, b_mat = instance.model.linearize(pt[:n_x], pt[n_x:])
        return np.concatenate([a_mat.T @ lam, b_mat.T @ lam])

    for j in range(n_x + n_u):
        e = np.zeros(n_x + n_u)
        e[j] = h
        out[:, j] = (grad(point + e) - grad(point - e)) / (2.0 * h)
    return 0.5 * (out + out.T)


def jn_hessian(
    instance: OcpInstance,
    z: PrimalDualPoint,
    x: Sequence[float],
    mode: HessianMode | None = None,
    ev: OcpEvaluation | None = None,
) -> sp.csr_matrix:
    """
    Josephy-Newton Hessian ≈ ∇²_w L(z, x)

    비용은 2차식이고 부등식은 affine이므로, 차분은 스테이지별 동역학 항
    λ_kᵀf_d(ξ_k, µ_k)에만 필요합니다. jn_augmented는 ρ_aug ∇gᵀ∇g를 더합니다.
    """
    mode = mode or HessianMode(kind="josephy_newton")
    n_x, n_u = instance.n_x, instance.n_u
    xs = instance.states(z.w, x)
    us = instance.inputs(z.w)

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for k in range(instance.horizon):
        lam = z.lam[k * n_x : (k + 1) * n_x]
        if not np.any(lam):
            continue
        curv = _stage_curvature(instance, xs[k], us[k], lam, mode.fd_step)
        u_idx = np.arange(instance.u_index(k).start, instance.u_index(k).stop)
        if k == 0:
            # ξ_0 = x는 결정 변수가 아님
            idx = u_idx
            curv = curv[n_x:, n_x:]
        else:
            x_idx = np.arange(instance.x_index(k).start, instance.x_index(k).stop)
            idx = np.concatenate([x_idx, u_idx])
        rr, cc = np.meshgrid(idx, idx, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(curv.ravel())

    hess = instance.cost_hessian.copy()
    if vals:
        hess = hess + sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(instance.n_w, instance.n_w),
        )
    if mode.kind == "jn_augmented":
        eq_jac = ev.eq_jac if ev is not None else instance.linearize_dynamics(z.w, x)[1]
        hess = hess + mode.rho_aug * (eq_jac.T @ eq_jac)
    return sp.csr_matrix(0.5 * (hess + hess.T))


# ========== 정규화 ==========


def null_space_basis(
    instance: OcpInstance, a_mats: list[np.ndarray], b_mats: list[np.ndarray]
) -> np.ndarray:
    """
    ∇_w g의 영공간 기저 Z (n_w × (N·n_u + 슬랙 수))

    자유 변수는 입력과 슬랙이며, 상태 열은 ξ_{k+1} = A_k ξ_k + B_k µ_k로 전파합니다.
    """
    n_x, n_u, horizon = instance.n_x, instance.n_u, instance.horizon
    n_slack_stage = 2 * instance.n_s
    n_free = horizon * n_u + instance.n_slack
    basis = np.zeros((instance.n_w, n_free))
    sens = np.zeros((n_x, n_free))

    for k in range(horizon):
        ucols = slice(k * n_u, (k + 1) * n_u)
        basis[instance.u_index(k), ucols] = np.eye(n_u)
        sens = a_mats[k] @ sens
        sens[:, ucols] += b_mats[k]
        basis[instance.x_index(k + 1), :] = sens
        if n_slack_stage:
            scol = horizon * n_u + k * n_slack_stage
            basis[instance.slack_index(k + 1), scol : scol + n_slack_stage] = np.eye(
                n_slack_stage
            )
    return basis


def reduced_hessian_min_eig(
    instance: OcpInstance,
    hess: sp.spmatrix,
    a_mats: list[np.ndarray],
    b_mats: list[np.ndarray],
) -> float:
    """ZᵀBZ의 최소 고유값 (Z는 ∇g 영공간 기저)"""
    basis = null_space_basis(instance, a_mats, b_mats)
    reduced = basis.T @ (hess @ basis)
    reduced = 0.5 * (reduced + reduced.T)
    return float(eigvalsh(reduced, subset_by_index=[0, 0])[0])


def choose_reg_delta(min_eig: float, floor: float = 0.0) -> float:
    """
    δ 선택: 최소 고유값이 PD_THRESHOLD 이하이면 δ = max(floor, −λ_min + 1e-6)

    Z의 자유 변수 행은 단위 행렬이므로 ZᵀZ ⪰ I이고, 따라서
    Zᵀ(B + δI)Z ⪰ (λ_min + δ)I 입니다.
    """
    if min_eig > PD_THRESHOLD:
        return floor
    return max(floor, -min_eig + REG_MARGIN)


def build_subproblem(
    instance: OcpInstance,
    z: PrimalDualPoint,
    ev: OcpEvaluation,
    hess: sp.spmatrix,
) -> QpSubproblem:
    """점 z에서의 QP 부문제"""
    return QpSubproblem(
        hess=hess,
        eq_jac=ev.eq_jac,
        eq_rhs=ev.g,
        ineq_jac=instance.ineq_jac,
        ineq_rhs=ev.h,
        grad=ev.cost_grad,
    )


# ========== 풀이기 ==========


class SqpSolver:
    """
    시간 분산 SQP 풀이기

    QP 작업 공간을 보관하므로 실행 흐름(시뮬레이션, 스윕 셀)마다 하나씩 사용합니다.

    Example:
        solver = SqpSolver(instance, SqpConfig(ell=1))
        z, trace = solver.iterate(z, x, warm=trace.active_set)
    """

    def __init__(
        self, instance: OcpInstance, cfg: SqpConfig, qp_solver: QpSolver | None = None
    ) -> None:
        cfg.validate()
        self.instance = instance
        self.cfg = cfg
        self.qp = qp_solver or QpSolver()
        self.last_active_set: tuple[int, ...] | None = None

    def hessian(
        self, z: PrimalDualPoint, x: Sequence[float], ev: OcpEvaluation
    ) -> sp.csr_matrix:
        mode = self.cfg.mode
        if mode.kind == "gauss_newton":
            return gn_hessian(self.instance, z.w)
        return jn_hessian(self.instance, z, x, mode, ev=ev)

    def td_step(
        self,
        z: PrimalDualPoint,
        x: Sequence[float],
        warm: Iterable[int] | None = None,
    ) -> tuple[PrimalDualPoint, StepReport]:
        """
        T(z, x): QP 부문제 하나를 풀어 z⁺ = (w + Δw, π, η) 반환

        Raises:
            QpFailure: QP가 solved가 아닌 상태로 끝난 경우 (status 포함)
        """
        inst = self.instance
        x = np.asarray(x, dtype=float)
        ev = inst.evaluate(z, x)
        pi_before = inst.natural_residual_at(z, ev)

        hess = self.hessian(z, x, ev)
        min_eig = reduced_hessian_min_eig(inst, hess, ev.a_mats, ev.b_mats)
        delta = choose_reg_delta(min_eig, self.cfg.reg_delta_floor)
        sub = regularize(build_subproblem(inst, z, ev, hess), delta)

        if warm is None:
            warm = inst.slack_rows
        sol = self.qp.solve(sub, warm)
        if not sol.solved:
            raise QpFailure(sol.status, f"QP 부문제 실패: status={sol.status}", subproblem=sub)

        z_next = PrimalDualPoint(z.w + sol.dw, sol.pi, sol.eta)
        pi_after = inst.natural_residual(z_next, x)
        self.last_active_set = sol.active_set

        report = StepReport(
            mode=self.cfg.mode.short_name,
            pi_before=pi_before,
            pi_after=pi_after,
            active_set=sol.active_set,
            reg_delta=delta,
            min_reduced_eig=min_eig,
            qp_iterations=sol.iterations,
            qp_status=sol.status,
        )
        logger.debug(
            "SQP 단계 | mode={mode} | pi {before:.3e} → {after:.3e} | reg {reg:.1e} | "
            "active {n_act} | qp_it {qp_it}",
            mode=report.mode,
            before=pi_before,
            after=pi_after,
            reg=delta,
            n_act=report.active_set_size,
            qp_it=sol.iterations,
        )
        return z_next, report

    def iterate(
        self,
        z: PrimalDualPoint,
        x: Sequence[float],
        warm: Iterable[int] | None = None,
    ) -> tuple[PrimalDualPoint, IterationTrace]:
        """
        T_ℓ(z, x): td_step을 ℓ번 적용 (active set을 다음 단계로 전달)

        Raises:
            IterationError: 중간 단계 실패 (부분 잔차 trace 포함)
        """
        trace = IterationTrace()
        for i in range(self.cfg.ell):
            try:
                z, report = self.td_step(z, x, warm)
            except QpFailure as e:
                raise IterationError(
                    e.status,
                    trace.residuals,
                    f"{i + 1}/{self.cfg.ell}번째 SQP 단계 실패: {e}",
                    subproblem=e.subproblem,
                ) from e
            if not trace.residuals:
                trace.residuals.append(report.pi_before)
            trace.residuals.append(report.pi_after)
            trace.reports.append(report)
            warm = report.active_set
        return z, trace

    def solve_to_tolerance(
        self,
        z0: PrimalDualPoint,
        x: Sequence[float],
        warm: Iterable[int] | None = None,
        stall_limit: int = 30,
    ) -> tuple[PrimalDualPoint, int]:
        """
        자연 잔차가 kkt_tol 이하가 될 때까지 반복

        Returns:
            (z*, 사용한 반복 수)

        Raises:
            NoConvergenceError: 반복 상한, 잔차 정체, 발산 또는 QP 실패
        """
        tol = self.cfg.kkt_tol
        z = z0
        residual = self.instance.natural_residual(z, x)
        trace = [residual]
        if residual <= tol:
            return z, 0

        best = residual
        stall = 0
        for it in range(1, self.cfg.max_iter + 1):
            try:
                z, report = self.td_step(z, x, warm)
            except QpFailure as e:
                raise NoConvergenceError(
                    f"완전 수렴 중 QP 실패 ({it}번째 반복): {e}", trace
                ) from e
            warm = report.active_set
            residual = report.pi_after
            trace.append(residual)

            if not np.isfinite(residual):
                raise NoConvergenceError(f"잔차 발산 ({it}번째 반복)", trace)
            if residual <= tol:
                logger.debug(
                    "완전 수렴 | mode={mode} | 반복 {it} | pi {pi:.3e}",
                    mode=self.cfg.mode.short_name,
                    it=it,
                    pi=residual,
                )
                return z, it
            if residual < 0.99 * best:
                best, stall = residual, 0
            else:
                stall += 1
                if stall >= stall_limit:
                    raise NoConvergenceError(
                        f"잔차 정체: {stall_limit}회 동안 개선 없음 (pi={residual:.3e})",
                        trace,
                    )
        raise NoConvergenceError(
            f"반복 상한 {self.cfg.max_iter} 도달 (pi={residual:.3e})", trace
        )


# ========== 함수형 진입점 ==========


def td_step(
    instance: OcpInstance,
    z: PrimalDualPoint,
    x: Sequence[float],
    cfg: SqpConfig,
    warm: Iterable[int] | None = None,
) -> tuple[PrimalDualPoint, StepReport]:
    return SqpSolver(instance, cfg).td_step(z, x, warm)


def iterate(
    instance: OcpInstance,
    z: PrimalDualPoint,
    x: Sequence[float],
    cfg: SqpConfig,
    warm: Iterable[int] | None = None,
) -> tuple[PrimalDualPoint, IterationTrace]:
    return SqpSolver(instance, cfg).iterate(z, x, warm)


def solve_to_tolerance(
    instance: OcpInstance,
    z0: PrimalDualPoint,
    x: Sequence[float],
    cfg: SqpConfig,
    warm: Iterable[int] | None = None,
) -> tuple[PrimalDualPoint, int]:
    return SqpSolver(instance, cfg).solve_to_tolerance(z0, x, warm)
