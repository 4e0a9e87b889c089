"""
진단 - 수렴 속도 적합, ISS 이득, 소이득 검사, 정칙성 모니터

- fit_rate: z* 주변 섭동에서 한 단계 오차 쌍 (e_i, e_{i+1})을 모아
  log e_{i+1} = log η + q log e_i 를 회귀
- compute_gains: a(ℓ), θ(ℓ) = b·a, σ(ℓ) = θ/(1−a), τ(ℓ) = ½(σ + b)⁻¹
- estimate_solution_lipschitz: 선분 위 해 사상의 Lipschitz 상수 추정
- small_gain_check: ‖Ξ‖·σ(ℓ)·γ₃ ≤ 1 (γ₃은 선형 기울기 근사)
- licq_monitor / ssosc_monitor: 해에서의 LICQ, 강 2차 충분 조건 수치 검사

Usage:
    from tdo_mpc.core.diagnostics import compute_gains, fit_rate

    fit = fit_rate(instance, x, HessianMode("josephy_newton"), [1e-3, 1e-2], trials=10)
    gains = compute_gains(fit, b_hat=2.0, ells=range(1, 11))
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np
import scipy.linalg as sla
from loguru import logger
from scipy.stats import linregress

from tdo_mpc.core.config import HessianMode, SqpConfig
from tdo_mpc.core.controller import OptimalMpcController, oracle_config
from tdo_mpc.core.errors import (
    BranchJumpError,
    DegenerateSegmentError,
    FitRefusedError,
    HypothesisViolatedError,
    LicqFailureError,
    QpFailure,
)
from tdo_mpc.core.models import DynamicsModel
from tdo_mpc.core.ocp import OcpInstance, PrimalDualPoint, project_cone
from tdo_mpc.core.sqp import SqpSolver, jn_hessian

# 회귀에 필요한 최소 오차 쌍 수
MIN_SAMPLES = 10
# 이 값 이하의 오차는 기준 해의 오차에 묻히므로 회귀에서 제외
ERROR_FLOOR = 1e-8
# 기준 해 z* 허용치
ORACLE_TOL = 1e-10
# 활성/강활성 판정 허용치
ACTIVE_TOL = 1e-6
# 랭크 판정 (특이값 상대 허용치)
RANK_TOL = 1e-10

GAMMA3_NOTE = "γ₃ 선형 기울기 근사 (경험적 검사, 인증 아님)"


# ========== 수렴 속도 ==========


@dataclass
class RateTrial:
    """섭동 시행 하나: 반경, 오차 수열, 수렴 여부"""

    radius: float
    errors: list[float]
    converged: bool


@dataclass
class RateFit:
    """
    수렴 속도 적합 결과

    Attributes:
        q_hat: 적합된 차수 (회귀 기울기)
        eta_hat: 적합된 상수 exp(절편)
        eps_hat: 작은 반경부터 모든 시행이 연속으로 수렴한 마지막 반경 (실제 ε의 하한)
        sample_count: 회귀에 사용한 오차 쌍 수
        r_squared: 로그-로그 회귀의 R²
    """

    q_hat: float
    eta_hat: float
    eps_hat: float
    sample_count: int
    r_squared: float = float("nan")
    trials: list[RateTrial] = field(default_factory=list, repr=False)

    @property
    def is_linear(self) -> bool:
        return self.q_hat <= 1.0


def fit_error_pairs(
    before: Sequence[float],
    after: Sequence[float],
    eps_hat: float = float("nan"),
    floor: float = ERROR_FLOOR,
) -> RateFit:
    """
    오차 쌍으로 q, η 회귀 (솔버 없는 순수 회귀)

    Raises:
        FitRefusedError: 유효한 쌍이 MIN_SAMPLES 미만인 경우
    """
    e0 = np.asarray(before, dtype=float)
    e1 = np.asarray(after, dtype=float)
    keep = (e0 > floor) & (e1 > floor) & np.isfinite(e0) & np.isfinite(e1)
    count = int(np.sum(keep))
    if count < MIN_SAMPLES:
        raise FitRefusedError(f"유효한 오차 쌍이 부족합니다: {count} < {MIN_SAMPLES}")
    if np.ptp(np.log(e0[keep])) == 0:
        raise FitRefusedError("오차 크기가 모두 같아 기울기를 정할 수 없습니다")
    reg = linregress(np.log(e0[keep]), np.log(e1[keep]))
    return RateFit(
        q_hat=float(reg.slope),
        eta_hat=float(np.exp(reg.intercept)),
        eps_hat=eps_hat,
        sample_count=count,
        r_squared=float(reg.rvalue**2),
    )


def _perturb(
    z_star: PrimalDualPoint, radius: float, rng: np.random.Generator, instance: OcpInstance
) -> PrimalDualPoint:
    direction = rng.standard_normal(z_star.dim)
    direction *= radius / np.linalg.norm(direction)
    vec = project_cone(z_star.stack() + direction, instance.cone)
    return instance.point_from_vector(vec)


def settle_steps(mode: HessianMode) -> int:
    """
    회귀에서 버리는 초기 단계 수

    Hessian이 승수를 쓰지 않으면 (GN) 섭동된 승수는 첫 단계에서 QP 승수로
    통째로 바뀌고, 그 승수는 섭동된 w에서 계산된 값입니다. 오차는 두 번째
    단계 이후부터 일정한 비율로 줄어듭니다.
    """
    return 0 if mode.uses_multipliers else 2


def is_contracting(errors: Sequence[float], settle: int = 0, floor: float = ERROR_FLOOR) -> bool:
    """settle 이후의 오차가 바닥값에 닿을 때까지 엄격히 감소하는지"""
    tail = np.asarray(errors[settle:], dtype=float)
    if not np.all(np.isfinite(tail)):
        return False
    for prev, cur in zip(tail[:-1], tail[1:]):
        if prev <= floor:
            break
        if cur >= prev:
            return False
    return True


def admissible_radius(trials: Sequence[RateTrial]) -> float:
    """
    작은 반경부터 보며 모든 시행이 수렴한 마지막 반경

    실패한 시행이 있는 첫 반경에서 멈추므로 그보다 큰 반경은 세지 않습니다.
    하나도 없으면 0입니다.
    """
    eps_hat = 0.0
    for radius in sorted({t.radius for t in trials}):
        if not all(t.converged for t in trials if t.radius == radius):
            break
        eps_hat = radius
    return eps_hat


def fit_rate(
    instance: OcpInstance,
    x: Sequence[float],
    mode: HessianMode,
    radii: Sequence[float],
    trials: int,
    seed: int = 0,
    steps: int = 6,
    z_star: PrimalDualPoint | None = None,
) -> RateFit:
    """
    z*(x) 주변 무작위 섭동에서 수렴 차수 적합

    시행마다 SeedSequence(seed)에서 파생한 독립 난수열을 씁니다. 섭동은 원뿔 K로
    사영한 뒤 시작점으로 사용합니다. 반경은 작은 것부터 돌리고, 수렴하지 않은
    시행이 나온 반경 다음은 돌리지 않습니다. 회귀에는 settle_steps(mode) 이후의
    오차 쌍만 씁니다.

    Raises:
        NoConvergenceError: 기준 해 z*를 구하지 못한 경우
        FitRefusedError: 유효한 오차 쌍이 부족한 경우
    """
    x = np.asarray(x, dtype=float)
    if z_star is None:
        z_star, _ = SqpSolver(
            instance, replace(oracle_config(), kkt_tol=ORACLE_TOL)
        ).solve_to_tolerance(instance.zero_point(), x)
    solver = SqpSolver(instance, SqpConfig(mode=mode, ell=1))
    settle = settle_steps(mode)

    streams = np.random.SeedSequence(seed).spawn(len(radii) * trials)
    before: list[float] = []
    after: list[float] = []
    records: list[RateTrial] = []
    for i, radius in enumerate(sorted(radii)):
        all_ok = True
        for j in range(trials):
            rng = np.random.Generator(np.random.PCG64(streams[i * trials + j]))
            z = _perturb(z_star, radius, rng, instance)
            errors = [z.distance(z_star)]
            failed = False
            warm = None
            for _ in range(steps):
                try:
                    z, report = solver.td_step(z, x, warm)
                except QpFailure:
                    failed = True
                    break
                warm = report.active_set
                errors.append(z.distance(z_star))
                if errors[-1] <= ERROR_FLOOR:
                    break
            converged = not failed and is_contracting(errors, settle)
            if converged:
                before.extend(errors[settle:-1])
                after.extend(errors[settle + 1 :])
            all_ok &= converged
            records.append(RateTrial(radius=float(radius), errors=errors, converged=converged))
        if not all_ok:
            logger.debug(
                "수렴 실패 시행 | mode={mode} | 반경 {r:.1e} | 이후 반경 생략",
                mode=mode.short_name,
                r=radius,
            )
            break

    eps_hat = admissible_radius(records)
    if eps_hat == 0.0:
        logger.warning("수렴 반경 추정 실패 | mode={mode} | 가장 작은 반경에서도 발산", mode=mode.short_name)
    try:
        fit = fit_error_pairs(before, after, eps_hat=eps_hat)
    except FitRefusedError as e:
        logger.warning("속도 적합 거부 | mode={mode} | {err}", mode=mode.short_name, err=e)
        raise
    fit.trials = records
    logger.info(
        "속도 적합 | mode={mode} | q {q:.3f} | η {eta:.3e} | ε {eps:.1e} | R² {r2:.3f} | 표본 {n}",
        mode=mode.short_name,
        q=fit.q_hat,
        eta=fit.eta_hat,
        eps=fit.eps_hat,
        r2=fit.r_squared,
        n=fit.sample_count,
    )
    return fit


# ========== ISS 이득 ==========


@dataclass
class IssGains:
    """
    ℓ = ells에 대해 표로 만든 이득

    Attributes:
        ells: ℓ 값
        a, theta, sigma, tau: a(ℓ), θ(ℓ), σ(ℓ), τ(ℓ)
        b_hat: 해 사상 Lipschitz 상수 추정
        q, eta, eps: 사용한 속도 파라미터
        valid: a(ℓ) ∈ (0, 1)이고 순감소인지
    """

    ells: np.ndarray
    a: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    b_hat: float
    q: float
    eta: float
    eps: float
    valid: bool = True

    @property
    def gain_slope(self) -> np.ndarray:
        """최적화기 오차계의 점근 이득 기울기 2σ(ℓ)"""
        return 2.0 * self.sigma

    @property
    def e0_radius(self) -> float:
        """허용 초기 오차 반경 ε/2"""
        return 0.5 * self.eps

    @property
    def dx_radius(self) -> np.ndarray:
        """허용 파라미터 증분 반경 τ(ℓ)·ε"""
        return self.tau * self.eps

    def beta(self, s: float, k: int, ell: int) -> float:
        """KL 경계 β_ℓ(s, k) = 2 a(ℓ)^k s"""
        idx = int(np.flatnonzero(self.ells == ell)[0])
        return float(2.0 * self.a[idx] ** k * s)

    def rows(self) -> list[dict[str, Any]]:
        return [
            {
                "ell": int(ell),
                "a": float(a),
                "theta": float(th),
                "sigma": float(sg),
                "tau": float(ta),
                "gain_slope": float(2.0 * sg),
                "dx_radius": float(ta * self.eps),
            }
            for ell, a, th, sg, ta in zip(self.ells, self.a, self.theta, self.sigma, self.tau)
        ]


def contraction_factor(q: float, eta: float, eps: float, ell: int) -> float:
    """a(ℓ) = η^ℓ (q = 1) 또는 (η ε^{q−1})^{(q^ℓ−1)/(q−1)} (q > 1)"""
    if q <= 1.0:
        return eta**ell
    return (eta * eps ** (q - 1.0)) ** ((q**ell - 1.0) / (q - 1.0))


def compute_gains(fit: RateFit, b_hat: float, ells: Iterable[int]) -> IssGains:
    """
    속도 적합으로 이득 표 작성

    q ≤ 1로 적합되면 선형 공식 a(ℓ) = η^ℓ을 씁니다.

    Raises:
        HypothesisViolatedError: η ε^{q−1} ≥ 1 (q > 1) 또는 η ≥ 1 (q ≤ 1)
    """
    q, eta, eps = float(fit.q_hat), float(fit.eta_hat), float(fit.eps_hat)
    base = eta if q <= 1.0 else eta * eps ** (q - 1.0)
    if not np.isfinite(base) or base >= 1.0:
        raise HypothesisViolatedError(f"수축 조건 위반: η ε^(q−1) = {base:.4g} ≥ 1")
    if b_hat < 0:
        raise ValueError(f"b_hat은 0 이상이어야 합니다: {b_hat}")

    ell_arr = np.asarray(sorted(int(e) for e in ells), dtype=int)
    if ell_arr.size == 0 or ell_arr[0] < 1:
        raise ValueError("ells는 1 이상의 정수를 하나 이상 포함해야 합니다")
    a = np.array([contraction_factor(q, eta, eps, int(ell)) for ell in ell_arr])
    theta = b_hat * a
    sigma = theta / (1.0 - a)
    tau = 0.5 / (sigma + b_hat)

    valid = bool(np.all((a > 0) & (a < 1)) and np.all(np.diff(a) < 0))
    if not valid:
        logger.warning("이득 표가 유효하지 않음 | a(ℓ)가 (0,1) 밖이거나 순감소가 아님")
    return IssGains(
        ells=ell_arr,
        a=a,
        theta=theta,
        sigma=sigma,
        tau=tau,
        b_hat=float(b_hat),
        q=q,
        eta=eta,
        eps=eps,
        valid=valid,
    )


# ========== 해 사상 Lipschitz 상수 ==========


@dataclass
class LipschitzEstimate:
    b_hat: float
    ratios: list[float]
    solutions: list[PrimalDualPoint] = field(default_factory=list, repr=False)


def estimate_solution_lipschitz(
    instance: OcpInstance,
    params: Sequence[Sequence[float]],
    cfg: SqpConfig | None = None,
    jump_factor: float = 10.0,
) -> LipschitzEstimate:
    """
    b̂ = max_j ‖z*(x_{j+1}) − z*(x_j)‖ / ‖x_{j+1} − x_j‖

    직전 해로 warm start하여 한 가지 해 가지를 따라갑니다.

    Raises:
        DegenerateSegmentError: 모든 파라미터 간격이 0인 경우
        BranchJumpError: 비율이 누적 추정치의 jump_factor배를 넘는 경우
        NoConvergenceError: 표본 파라미터에서 풀이 실패
    """
    points = [np.asarray(p, dtype=float) for p in params]
    if len(points) < 2:
        raise DegenerateSegmentError("파라미터 표본이 2개 이상 필요합니다")
    steps = [np.linalg.norm(b - a) for a, b in zip(points, points[1:])]
    if max(steps) == 0.0:
        logger.warning("길이 0인 선분 | 모든 비율이 0이므로 추정 거부")
        raise DegenerateSegmentError("선분 길이가 0입니다")

    solver = SqpSolver(instance, cfg or oracle_config())
    z, _ = solver.solve_to_tolerance(instance.zero_point(), points[0])
    solutions = [z]
    ratios: list[float] = []
    running = 0.0
    for j in range(1, len(points)):
        z_next, _ = solver.solve_to_tolerance(z, points[j], solver.last_active_set)
        solutions.append(z_next)
        if steps[j - 1] == 0.0:
            z = z_next
            continue
        ratio = z_next.distance(z) / steps[j - 1]
        if running > 0 and ratio > jump_factor * running:
            raise BranchJumpError(
                f"해 가지 이탈 의심: 비율 {ratio:.3e} > {jump_factor} × {running:.3e} (j={j})"
            )
        ratios.append(ratio)
        running = max(running, ratio)
        z = z_next

    logger.info("Lipschitz 추정 | b̂ {b:.4e} | 구간 {n}", b=running, n=len(ratios))
    return LipschitzEstimate(b_hat=running, ratios=ratios, solutions=solutions)


# ========== 소이득 검사 ==========


@dataclass
class Gamma3Estimate:
    """Δu 주입 실험으로 얻은 γ₃ 선형 기울기"""

    slope: float
    radii: np.ndarray
    responses: np.ndarray
    note: str = GAMMA3_NOTE


def estimate_gamma3_slope(
    instance: OcpInstance,
    plant: DynamicsModel,
    x0: Sequence[float],
    du_radii: Sequence[float],
    steps: int = 50,
    seed: int = 0,
    cfg: SqpConfig | None = None,
) -> Gamma3Estimate:
    """
    최적 피드백에 크기 r의 무작위 Δu_k를 더했을 때 sup_k ‖Δx_k‖의 r에 대한 기울기

    원점을 지나는 최소제곱 직선 기울기 Σ r·Δx / Σ r²를 반환합니다. 외란은 없습니다.
    """
    x0 = np.asarray(x0, dtype=float)
    cfg = cfg or SqpConfig()

    def rollout(offsets: np.ndarray) -> np.ndarray:
        ctrl = OptimalMpcController(instance, cfg)
        x = x0.copy()
        traj = [x]
        for k in range(steps):
            u = ctrl.control(x).u + offsets[k]
            x = plant.step(x, u)
            traj.append(x)
        return np.asarray(traj)

    nominal = rollout(np.zeros((steps, instance.n_u)))
    rng = np.random.Generator(np.random.PCG64(seed))
    radii = np.asarray(du_radii, dtype=float)
    responses = []
    for r in radii:
        dirs = rng.standard_normal((steps, instance.n_u))
        dirs *= r / np.linalg.norm(dirs, axis=1, keepdims=True)
        responses.append(float(np.max(np.linalg.norm(rollout(dirs) - nominal, axis=1))))
    resp = np.asarray(responses)
    slope = float(radii @ resp / (radii @ radii)) if np.any(radii) else 0.0
    logger.info("γ₃ 기울기 추정 | {slope:.4e} | 반경 {n}개 | {note}", slope=slope, n=radii.size, note=GAMMA3_NOTE)
    return Gamma3Estimate(slope=slope, radii=radii, responses=resp)


@dataclass
class SmallGainResult:
    satisfied: bool
    ell_star: int | None
    products: np.ndarray
    du_radius: float | None = None
    note: str = GAMMA3_NOTE


def small_gain_check(
    gains: IssGains,
    xi_norm: float,
    gamma3_slope: float,
    du_radius: float | None = None,
) -> SmallGainResult:
    """‖Ξ‖·σ(ℓ)·γ₃ ≤ 1을 ℓ마다 검사하고 처음 통과하는 ℓ 반환"""
    products = xi_norm * gains.sigma * gamma3_slope
    passing = np.flatnonzero(products <= 1.0)
    ell_star = int(gains.ells[passing[0]]) if passing.size else None
    if ell_star is None:
        logger.warning("소이득 조건이 표의 ℓ 범위에서 만족되지 않음")
    else:
        logger.info("소이득 조건 | ℓ* = {ell} | {note}", ell=ell_star, note=GAMMA3_NOTE)
    return SmallGainResult(
        satisfied=ell_star is not None,
        ell_star=ell_star,
        products=products,
        du_radius=du_radius,
    )


# ========== 정칙성 모니터 ==========


def _normalize_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return mat / norms


def rank_deficiency(rows: np.ndarray, tol: float = RANK_TOL) -> int:
    """정규화한 행들의 랭크 결손 (열 피벗 QR의 대각 원소로 판정)"""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[0] == 0:
        return 0
    normalized = _normalize_rows(rows)
    r_mat = sla.qr(normalized.T, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(r_mat))
    if diag.size == 0 or diag[0] == 0.0:
        return rows.shape[0]
    rank = int(np.sum(diag > tol * diag[0]))
    return rows.shape[0] - rank


@dataclass
class LicqReport:
    deficiency: int
    active_set: tuple[int, ...]
    n_rows: int

    @property
    def holds(self) -> bool:
        return self.deficiency == 0


def active_constraints(instance: OcpInstance, z: PrimalDualPoint, tol: float = ACTIVE_TOL) -> np.ndarray:
    """A(w) = {i : h_i(w) ≥ −tol}"""
    return np.flatnonzero(instance.ineq(z.w) >= -tol)


def licq_monitor(
    instance: OcpInstance, z: PrimalDualPoint, x: Sequence[float], tol: float = ACTIVE_TOL
) -> LicqReport:
    """[∇g; 활성 ∇h 행]의 랭크 결손 (0이면 LICQ 수치적으로 성립)"""
    _, eq_jac, _, _ = instance.linearize_dynamics(z.w, x)
    active = active_constraints(instance, z, tol)
    stacked = np.vstack([eq_jac.toarray(), instance.ineq_jac[active].toarray()])
    deficiency = rank_deficiency(stacked)
    if deficiency:
        logger.warning("LICQ 실패 | 랭크 결손 {d} | 활성 {n}", d=deficiency, n=active.size)
    return LicqReport(
        deficiency=deficiency,
        active_set=tuple(int(i) for i in active),
        n_rows=stacked.shape[0],
    )


@dataclass
class SsoscReport:
    min_eig: float
    strongly_active: tuple[int, ...]
    null_dim: int
    tol: float = ACTIVE_TOL

    @property
    def holds(self) -> bool:
        return self.min_eig > self.tol


def ssosc_monitor(
    instance: OcpInstance,
    z: PrimalDualPoint,
    x: Sequence[float],
    hessian: Any = None,
    tol: float = ACTIVE_TOL,
) -> SsoscReport:
    """
    강활성 제약 영공간에서 ∇²_w L의 최소 고유값

    Raises:
        LicqFailureError: z에서 LICQ가 성립하지 않는 경우
    """
    licq = licq_monitor(instance, z, x, tol)
    if not licq.holds:
        raise LicqFailureError(licq.deficiency, licq.active_set)

    hess = hessian if hessian is not None else jn_hessian(instance, z, x)
    hess = hess.toarray() if hasattr(hess, "toarray") else np.asarray(hess, dtype=float)
    active = np.asarray(licq.active_set, dtype=int)
    strong = active[z.v[active] > tol] if active.size else active
    _, eq_jac, _, _ = instance.linearize_dynamics(z.w, x)
    stacked = np.vstack([eq_jac.toarray(), instance.ineq_jac[strong].toarray()])
    basis = sla.null_space(stacked)
    if basis.shape[1] == 0:
        min_eig = float("inf")
    else:
        reduced = basis.T @ hess @ basis
        min_eig = float(np.linalg.eigvalsh(0.5 * (reduced + reduced.T))[0])
    report = SsoscReport(
        min_eig=min_eig,
        strongly_active=tuple(int(i) for i in strong),
        null_dim=basis.shape[1],
        tol=tol,
    )
    if not report.holds:
        logger.warning("SSOSC 실패 | 최소 고유값 {eig:.3e}", eig=min_eig)
    return report


__all__ = [
    "Gamma3Estimate",
    "IssGains",
    "LicqReport",
    "LipschitzEstimate",
    "RateFit",
    "RateTrial",
    "SmallGainResult",
    "SsoscReport",
    "active_constraints",
    "compute_gains",
    "contraction_factor",
    "estimate_gamma3_slope",
    "estimate_solution_lipschitz",
    "fit_error_pairs",
    "fit_rate",
    "licq_monitor",
    "rank_deficiency",
    "small_gain_check",
    "ssosc_monitor",
]
