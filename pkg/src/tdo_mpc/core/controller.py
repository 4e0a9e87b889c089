"""
제어기 - TDO-MPC, 완전 수렴 MPC, LQR

- TdoController: z를 내부 상태로 갖는 동적 보상기 z_k = T_ℓ(z_{k−1}, x_k), u_k = Ξ z_k
- OptimalMpcController: 매 시점 완전 수렴한 MPC (κ(x) 기준)
- LqrController: 원점 선형화의 DARE 이득 u = −K x

Usage:
    from tdo_mpc.core.controller import TdoController, initialize

    z0 = initialize(instance, x0, "presolve", cfg)
    ctrl = TdoController(instance, cfg, z=z0)
    step = ctrl.control(x)
    step.u
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import scipy.sparse as sp
from loguru import logger

from tdo_mpc.core.config import HessianMode, SqpConfig
from tdo_mpc.core.errors import (
    ConfigError,
    IterationError,
    NonStabilizableError,
    NoConvergenceError,
)
from tdo_mpc.core.ocp import OcpInstance, PrimalDualPoint
from tdo_mpc.core.sqp import IterationTrace, SqpSolver, StepReport

# Riccati 재귀 발산 판정
DIVERGENCE_NORM = 1e12
# 제어기 하나가 남기는 QP 부문제 덤프 상한
MAX_QP_DUMPS = 5


@dataclass
class ControlStep:
    """
    한 샘플링 시점의 제어 결과

    Attributes:
        u: 플랜트에 인가할 입력
        clamped: 입력 경계로 잘렸는지 여부
        event: 이벤트 표시 ("" 이면 정상)
        report: 마지막 SQP 단계 보고 (TDO/최적 MPC)
        z: 갱신된 최적화기 상태
        trace: T_ℓ 잔차 기록
    """

    u: np.ndarray
    clamped: bool = False
    event: str = ""
    report: StepReport | None = None
    z: PrimalDualPoint | None = None
    trace: IterationTrace | None = None
    iterations: int = 0


def clamp_input(
    u: Sequence[float], lb: np.ndarray, ub: np.ndarray
) -> tuple[np.ndarray, bool]:
    """입력을 [lb, ub]로 자르고 실제로 잘렸는지 반환"""
    u_arr = np.asarray(u, dtype=float)
    out = np.clip(u_arr, lb, ub)
    return out, bool(np.any(out != u_arr))


# ========== 초기화 ==========


def initialize(
    instance: OcpInstance,
    x0: Sequence[float],
    strategy: Literal["cold", "presolve"] = "presolve",
    cfg: SqpConfig | None = None,
) -> PrimalDualPoint:
    """
    최적화기 초기 추정 z_0

    cold는 0 벡터, presolve는 x0에서 완전 수렴한 해입니다. presolve가 실패하면
    Gauss-Newton으로 다시 시도하고, 그래도 실패하면 경고 후 cold로 돌아갑니다.
    """
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < instance.x_lb) or np.any(x0 > instance.x_ub):
        raise ConfigError(f"초기 상태가 상태 경계 밖에 있습니다: {x0.tolist()}")
    if strategy == "cold":
        return instance.zero_point()
    if strategy != "presolve":
        raise ConfigError(f"알 수 없는 초기화 방식: {strategy!r}")

    cfg = cfg or SqpConfig()
    attempts = [cfg]
    if cfg.mode.kind != "gauss_newton":
        attempts.append(replace(cfg, mode=HessianMode()))

    for attempt in attempts:
        try:
            z, iterations = SqpSolver(instance, attempt).solve_to_tolerance(
                instance.zero_point(), x0
            )
        except NoConvergenceError as e:
            logger.warning(
                "사전 풀이 실패 | mode={mode} | {err}",
                mode=attempt.mode.short_name,
                err=e,
            )
            continue
        slack_total = float(np.sum(instance.slacks(z.w)))
        logger.info(
            "사전 풀이 완료 | mode={mode} | 반복 {it} | 슬랙 합 {slack:.3e}",
            mode=attempt.mode.short_name,
            it=iterations,
            slack=slack_total,
        )
        return z

    logger.warning("사전 풀이 실패 | 콜드 스타트로 대체")
    return instance.zero_point()


# ========== TDO-MPC ==========


class TdoController:
    """
    시간 분산 최적화 제어기

    Attributes:
        instance: OCP
        cfg: SQP 설정 (ℓ, Hessian 방식)
        z: 최적화기 내부 상태
        active_set: 다음 QP의 warm start active set
        dump_dir: QP 실패 시 부문제를 남길 디렉터리 (None이면 남기지 않음)
    """

    def __init__(
        self,
        instance: OcpInstance,
        cfg: SqpConfig,
        z: PrimalDualPoint | None = None,
        active_set: tuple[int, ...] | None = None,
        dump_dir: str | Path | None = None,
    ) -> None:
        self.instance = instance
        self.cfg = cfg
        self.dump_dir = Path(dump_dir) if dump_dir is not None else None
        self.dumps: list[Path] = []
        self.solver = SqpSolver(instance, cfg)
        self.z = z if z is not None else instance.zero_point()
        instance.check_point(self.z)
        self.active_set = active_set
        self.clamp_count = 0
        self.event_count = 0

    @property
    def xi_selector(self) -> sp.csr_matrix:
        """Ξ (µ_0 행 선택)"""
        return self.instance.selector

    @property
    def xi_norm(self) -> float:
        """‖Ξ‖₂ (행 선택 행렬이므로 1)"""
        return 1.0

    def _dump(self, error: IterationError) -> None:
        if self.dump_dir is None or error.subproblem is None or len(self.dumps) >= MAX_QP_DUMPS:
            return
        from tdo_mpc.artifacts.matrices import dump_subproblem

        path = self.dump_dir / f"qp_{self.event_count:03d}_{error.status}.txt"
        self.dumps.append(dump_subproblem(path, error.subproblem))
        logger.warning("QP 부문제 덤프 | {path}", path=path)

    def control(self, x: Sequence[float]) -> ControlStep:
        """z_k = T_ℓ(z_{k−1}, x_k), u_k = Ξ z_k (입력 경계로 안전 클램프)"""
        x = np.asarray(x, dtype=float)
        event = ""
        trace: IterationTrace | None = None
        try:
            z_new, trace = self.solver.iterate(self.z, x, self.active_set)
            self.z = z_new
            self.active_set = trace.active_set
        except IterationError as e:
            # z 유지, 직전 입력 적용
            event = f"qp_{e.status}"
            self.event_count += 1
            logger.warning(
                "QP 실패로 z 유지 | status={status} | x={x}",
                status=e.status,
                x=np.array2string(x, precision=4),
            )
            self._dump(e)

        u, clamped = clamp_input(
            self.xi_selector @ self.z.stack(), self.instance.u_lb, self.instance.u_ub
        )
        if clamped:
            self.clamp_count += 1
            logger.warning("TDO 입력 클램프 | u={u}", u=np.array2string(u, precision=4))
        return ControlStep(
            u=u,
            clamped=clamped,
            event=event,
            report=trace.last if trace else None,
            z=self.z,
            trace=trace,
            iterations=len(trace.reports) if trace else 0,
        )


def tdo_control(
    ctrl: TdoController, x: Sequence[float]
) -> tuple[np.ndarray, TdoController, StepReport | None]:
    step = ctrl.control(x)
    return step.u, ctrl, step.report


# ========== 완전 수렴 MPC ==========


def oracle_config(cfg: SqpConfig | None = None) -> SqpConfig:
    """최적 MPC/오차 기준용 설정 (Josephy-Newton, 같은 허용치)"""
    base = cfg or SqpConfig()
    return replace(base, mode=HessianMode(kind="josephy_newton"), ell=1)


class OptimalMpcController:
    """매 시점 solve_to_tolerance로 얻은 κ(x) 제어기"""

    def __init__(
        self,
        instance: OcpInstance,
        cfg: SqpConfig | None = None,
        z: PrimalDualPoint | None = None,
    ) -> None:
        self.instance = instance
        self.cfg = cfg or oracle_config()
        self.solver = SqpSolver(instance, self.cfg)
        self.z = z if z is not None else instance.zero_point()
        self.active_set: tuple[int, ...] | None = None
        self.clamp_count = 0

    def solve(self, x: Sequence[float]) -> tuple[PrimalDualPoint, int]:
        """warm start에서 x의 해 z*(x) 계산 (내부 상태 갱신)"""
        z_star, iterations = self.solver.solve_to_tolerance(self.z, x, self.active_set)
        self.z = z_star
        if iterations:
            self.active_set = self.solver.last_active_set
        return z_star, iterations

    def control(self, x: Sequence[float]) -> ControlStep:
        z_star, iterations = self.solve(x)
        u, clamped = clamp_input(
            self.instance.first_input(z_star), self.instance.u_lb, self.instance.u_ub
        )
        if clamped:
            self.clamp_count += 1
        return ControlStep(u=u, clamped=clamped, z=z_star, iterations=iterations)


def optimal_mpc_control(
    instance: OcpInstance,
    x: Sequence[float],
    z_warm: PrimalDualPoint,
    cfg: SqpConfig | None = None,
) -> tuple[np.ndarray, PrimalDualPoint]:
    """
    u = Ξ solve_to_tolerance(z_warm, x)

    Raises:
        NoConvergenceError: warm start가 수렴 영역 밖인 경우
    """
    step = OptimalMpcController(instance, cfg, z=z_warm).control(x)
    assert step.z is not None
    return step.u, step.z


# ========== LQR ==========


def dare_residual(
    p_mat: np.ndarray, a_mat: np.ndarray, b_mat: np.ndarray, q_mat: np.ndarray, r_mat: np.ndarray
) -> float:
    """‖P − (AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q)‖"""
    gain = np.linalg.solve(r_mat + b_mat.T @ p_mat @ b_mat, b_mat.T @ p_mat @ a_mat)
    rhs = a_mat.T @ p_mat @ a_mat - a_mat.T @ p_mat @ b_mat @ gain + q_mat
    return float(np.linalg.norm(p_mat - rhs))


def dare_solve(
    a_mat: np.ndarray,
    b_mat: np.ndarray,
    q_mat: np.ndarray,
    r_mat: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 200_000,
) -> tuple[np.ndarray, np.ndarray]:
    """
    이산시간 대수 Riccati 방정식 (P = Q에서 시작하는 Riccati 재귀)

    수렴 판정은 ‖P_{j+1} − P_j‖ ≤ tol·max(1, ‖P‖) 입니다.

    Returns:
        (P, K): u = −K x

    Raises:
        NonStabilizableError: ‖P‖ > 1e12, 유한하지 않은 값, 또는 반복 상한
    """
    a_mat = np.atleast_2d(np.asarray(a_mat, dtype=float))
    b_mat = np.asarray(b_mat, dtype=float).reshape(a_mat.shape[0], -1)
    q_mat = np.atleast_2d(np.asarray(q_mat, dtype=float))
    r_mat = np.atleast_2d(np.asarray(r_mat, dtype=float))

    p_mat = q_mat.copy()
    for it in range(1, max_iter + 1):
        bpa = b_mat.T @ p_mat @ a_mat
        gain = np.linalg.solve(r_mat + b_mat.T @ p_mat @ b_mat, bpa)
        p_next = a_mat.T @ p_mat @ a_mat - bpa.T @ gain + q_mat
        p_next = 0.5 * (p_next + p_next.T)

        norm = np.linalg.norm(p_next)
        if not np.all(np.isfinite(p_next)) or norm > DIVERGENCE_NORM:
            raise NonStabilizableError(
                f"Riccati 재귀 발산: {it}회 반복 후 ‖P‖ = {norm:.3e}"
            )
        if np.linalg.norm(p_next - p_mat) <= tol * max(1.0, norm):
            p_mat = p_next
            break
        p_mat = p_next
    else:
        raise NonStabilizableError(f"Riccati 재귀가 {max_iter}회 안에 수렴하지 않음")

    gain = np.linalg.solve(
        r_mat + b_mat.T @ p_mat @ b_mat, b_mat.T @ p_mat @ a_mat
    )
    logger.debug("DARE 수렴 | 반복 {it} | ‖P‖ {norm:.3e}", it=it, norm=np.linalg.norm(p_mat))
    return p_mat, gain


class LqrController:
    """
    u = −K x (입력 경계로 클램프)

    Attributes:
        k_gain: n_u×n_x 이득
        u_lb, u_ub: 입력 경계
        clamp_count: 클램프가 발생한 시점 수
    """

    def __init__(self, k_gain: np.ndarray, u_lb: np.ndarray, u_ub: np.ndarray) -> None:
        self.k_gain = np.atleast_2d(np.asarray(k_gain, dtype=float))
        self.u_lb = np.asarray(u_lb, dtype=float)
        self.u_ub = np.asarray(u_ub, dtype=float)
        self.clamp_count = 0

    @classmethod
    def from_instance(cls, instance: OcpInstance) -> "LqrController":
        """OCP와 같은 Q, R로 원점 선형화의 LQR 이득 계산"""
        n_x, n_u = instance.n_x, instance.n_u
        a_mat, b_mat = instance.model.jacobians(np.zeros(n_x), np.zeros(n_u))
        _, gain = dare_solve(a_mat, b_mat, instance.q_weight, instance.r_weight)
        return cls(gain, instance.u_lb, instance.u_ub)

    def control(self, x: Sequence[float]) -> ControlStep:
        u, clamped = clamp_input(
            -self.k_gain @ np.asarray(x, dtype=float), self.u_lb, self.u_ub
        )
        if clamped:
            self.clamp_count += 1
        return ControlStep(u=u, clamped=clamped)


def lqr_control(ctrl: LqrController, x: Sequence[float]) -> np.ndarray:
    return ctrl.control(x).u
