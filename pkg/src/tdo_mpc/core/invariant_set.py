"""
종단 요소 - 종단 비용 Q_f와 최대 허용 불변 집합 O_∞

선형화 폐루프 ξ⁺ = A_cl ξ (A_cl = A − BK)에 대해
    O_∞ = {ξ : C A_cl^t ξ ≤ c, t = 0..t*}
를 구성합니다. 새 행이 모두 LP로 중복 판정되면 종료(인증)하고, 상한에
도달하면 비인증 플래그와 함께 반환합니다. 불변성은 선형화에 대해서만
인증됩니다.

Usage:
    from tdo_mpc.core.invariant_set import compute_terminal_ingredients

    terminal = compute_terminal_ingredients(model, settings)
    terminal.polytope.a_mat, terminal.polytope.b_vec
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from tdo_mpc.core.config import OcpSettings
from tdo_mpc.core.controller import dare_residual, dare_solve
from tdo_mpc.core.errors import ConfigError, UnboundedSetError
from tdo_mpc.core.models import DynamicsModel
from tdo_mpc.core.polytope import Polytope, lp_redundancy_check

__all__ = [
    "InvarianceReport",
    "InvariantSetResult",
    "Polytope",
    "TerminalIngredients",
    "compute_terminal_ingredients",
    "gain_input_constraints",
    "lp_redundancy_check",
    "max_admissible_set",
    "validate_invariance",
]

# 불변성 검증 여유
INVARIANCE_MARGIN = 1e-9


@dataclass
class InvariantSetResult:
    """
    O_∞ 계산 결과

    Attributes:
        polytope: 중복 제거된 집합
        certified: 종료 조건으로 수렴했는지 (False면 상한 도달)
        iterations: 사용한 t* 값
        row_history: 각 반복 후 행 수 (단조 증가)
    """

    polytope: Polytope
    certified: bool
    iterations: int
    row_history: list[int] = field(default_factory=list)


@dataclass
class InvarianceReport:
    """표본 기반 불변성/허용성 검사 결과"""

    samples: int
    invariance_violations: int
    admissibility_violations: int
    max_violation: float

    @property
    def ok(self) -> bool:
        return self.invariance_violations == 0 and self.admissibility_violations == 0


@dataclass
class TerminalIngredients:
    """종단 비용과 종단 집합"""

    qf: np.ndarray
    k_gain: np.ndarray
    a_cl: np.ndarray
    polytope: Polytope
    certified: bool
    dare_residual: float
    constraints: Polytope


def gain_input_constraints(
    k_gain: np.ndarray, u_lb: np.ndarray, u_ub: np.ndarray
) -> Polytope:
    """u = −Kξ의 입력 경계를 상태 공간 행으로 변환: u_lb ≤ −Kξ ≤ u_ub"""
    k_gain = np.atleast_2d(k_gain)
    return Polytope(
        np.vstack([-k_gain, k_gain]),
        np.concatenate([np.asarray(u_ub, dtype=float), -np.asarray(u_lb, dtype=float)]),
    )


def max_admissible_set(
    a_cl: np.ndarray,
    state_constraints: Polytope,
    input_constraints: Polytope | None = None,
    cap: int = 500,
) -> InvariantSetResult:
    """
    최대 허용 불변 집합 O_∞

    Args:
        a_cl: 폐루프 행렬 (Schur 안정)
        state_constraints: 상태 제약 다면체
        input_constraints: 이득으로 사상된 입력 제약 (상태 공간)
        cap: t* 상한

    Raises:
        ConfigError: a_cl의 스펙트럼 반경이 1 이상인 경우
        UnboundedSetError: 결과 집합이 유계가 아닌 경우
    """
    a_cl = np.atleast_2d(np.asarray(a_cl, dtype=float))
    rho = float(np.max(np.abs(np.linalg.eigvals(a_cl))))
    if rho >= 1.0:
        raise ConfigError(f"폐루프 행렬이 Schur 안정이 아닙니다: 스펙트럼 반경 {rho:.6f}")
    base = state_constraints
    if input_constraints is not None:
        base = base.intersect(input_constraints)
    base = base.normalized()
    c_mat, c_vec = base.a_mat, base.b_vec

    a_rows = [c_mat]
    b_rows = [c_vec]
    history = [c_mat.shape[0]]
    power = np.eye(a_cl.shape[0])
    certified = False
    t = 0

    for t in range(1, cap + 1):
        power = power @ a_cl
        current = Polytope(np.vstack(a_rows), np.concatenate(b_rows))
        new_a = c_mat @ power
        added_a: list[np.ndarray] = []
        added_b: list[float] = []
        for row, off in zip(new_a, c_vec):
            norm = np.linalg.norm(row)
            if norm == 0:
                # 0 행: 0 ≤ off 이면 항상 만족
                continue
            if not lp_redundancy_check(current, row / norm, off / norm):
                added_a.append(row / norm)
                added_b.append(off / norm)
        if not added_a:
            certified = True
            break
        a_rows.append(np.vstack(added_a))
        b_rows.append(np.asarray(added_b))
        history.append(history[-1] + len(added_a))
        logger.debug("O_∞ 반복 | t={t} | 추가 {n} | 누적 {total}", t=t, n=len(added_a), total=history[-1])

    poly = Polytope(np.vstack(a_rows), np.concatenate(b_rows))
    if not poly.is_bounded():
        raise UnboundedSetError("제약이 O_∞ 재귀를 유계로 만들지 못합니다")
    poly = poly.remove_redundant()

    if certified:
        logger.info("O_∞ 인증 | t*={t} | 행 {rows}", t=t, rows=poly.n_rows)
    else:
        logger.warning("O_∞ 비인증 | 상한 {cap} 도달 | 행 {rows}", cap=cap, rows=poly.n_rows)
    return InvariantSetResult(polytope=poly, certified=certified, iterations=t, row_history=history)


def _ray_boundary(poly: Polytope, direction: np.ndarray) -> float:
    """원점에서 방향 d로 나아갈 때 경계까지의 거리"""
    ad = poly.a_mat @ direction
    pos = ad > 1e-15
    if not np.any(pos):
        return float("inf")
    return float(np.min(poly.b_vec[pos] / ad[pos]))


def validate_invariance(
    poly: Polytope,
    a_cl: np.ndarray,
    constraints: Polytope,
    samples: int = 10_000,
    seed: int = 0,
    margin: float = INVARIANCE_MARGIN,
) -> InvarianceReport:
    """
    표본 검사: 경계 점(절반)과 내부 점(절반)에서 A_cl ξ ∈ P, ξ ∈ 제약 확인

    표본은 원점에서 임의 방향으로 경계까지의 광선 위에서 뽑습니다.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    n = poly.n_dim
    directions = rng.standard_normal((samples, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    scales = np.ones(samples)
    half = samples // 2
    scales[half:] = rng.random(samples - half) ** (1.0 / n)

    points = []
    for d, s in zip(directions, scales):
        reach = _ray_boundary(poly, d)
        if not np.isfinite(reach):
            raise UnboundedSetError("검증 대상 집합이 유계가 아닙니다")
        points.append(s * reach * d)
    pts = np.asarray(points)

    succ = pts @ np.asarray(a_cl, dtype=float).T
    inv = poly.margins(succ).max(axis=1)
    adm = constraints.margins(pts).max(axis=1)
    report = InvarianceReport(
        samples=samples,
        invariance_violations=int(np.sum(inv > margin)),
        admissibility_violations=int(np.sum(adm > margin)),
        max_violation=float(max(inv.max(), adm.max())),
    )
    log = logger.info if report.ok else logger.warning
    log(
        "불변성 검사 | 표본 {n} | 불변 위반 {inv} | 허용 위반 {adm}",
        n=samples,
        inv=report.invariance_violations,
        adm=report.admissibility_violations,
    )
    return report


def compute_terminal_ingredients(
    model: DynamicsModel, settings: OcpSettings, cap: int = 500
) -> TerminalIngredients:
    """
    원점 선형화의 DARE로 Q_f, K를 구하고 O_∞를 계산

    완화 대상 상태 행도 여기서는 경계 그대로 사용합니다 (슬랙 없음).

    Raises:
        NonStabilizableError: 선형화가 안정화 불가능한 경우
    """
    n_x, n_u = model.n_x, model.n_u
    a_mat, b_mat = model.jacobians(np.zeros(n_x), np.zeros(n_u))
    q_mat, r_mat = settings.q_matrix(), settings.r_matrix()
    p_mat, k_gain = dare_solve(a_mat, b_mat, q_mat, r_mat)
    residual = dare_residual(p_mat, a_mat, b_mat, q_mat, r_mat)
    a_cl = a_mat - b_mat @ k_gain

    spectral = float(np.max(np.abs(np.linalg.eigvals(a_cl))))
    logger.info(
        "DARE 완료 | 잔차 {res:.3e} | 폐루프 스펙트럼 반경 {rho:.6f}",
        res=residual,
        rho=spectral,
    )

    state_poly = Polytope.from_box(settings.x_lb, settings.x_ub)
    input_poly = gain_input_constraints(k_gain, np.asarray(settings.u_lb), np.asarray(settings.u_ub))
    result = max_admissible_set(a_cl, state_poly, input_poly, cap=cap)
    return TerminalIngredients(
        qf=p_mat,
        k_gain=k_gain,
        a_cl=a_cl,
        polytope=result.polytope,
        certified=result.certified,
        dare_residual=residual,
        constraints=state_poly.intersect(input_poly),
    )
