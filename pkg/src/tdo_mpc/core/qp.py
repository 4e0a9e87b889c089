"""
QP 부문제 - 한 번의 Newton형 단계를 위한 볼록 QP와 active-set 풀이기

    min  ½ dwᵀ(B + δI)dw + ∇φᵀdw
    s.t. ∇g dw + g = 0
         ∇h dw + h ≤ 0

승수 부호 규약은 라그랑지안 φ + πᵀ(∇g dw + g) + ηᵀ(∇h dw + h) 입니다.

풀이기는 primal active-set 방식입니다. 각 반복에서 작업 집합을 등식으로 두는
EQP의 KKT 시스템을 희소 LU(scipy.sparse.linalg.splu)로 풉니다. 이전 active
set으로 warm start 할 수 있고, 가능 시작점이 없으면 HiGHS LP로 찾습니다.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Literal

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.optimize import linprog
from scipy.sparse.linalg import splu

from tdo_mpc.core.errors import QpFailure

QpStatus = Literal["solved", "max_iter", "infeasible"]


def _as_csr(mat, shape: tuple[int, int], name: str) -> sp.csr_matrix:
    out = sp.csr_matrix(mat, dtype=float) if mat is not None else sp.csr_matrix(shape)
    if out.shape != shape:
        raise ValueError(f"QP {name} 차원 불일치: {out.shape} vs {shape}")
    return out


@dataclass(frozen=True, eq=False)
class QpSubproblem:
    """
    Newton형 단계 하나의 QP 데이터

    Attributes:
        hess: 원 변수 블록의 대칭 행렬 B_i
        eq_jac, eq_rhs: ∇_w g, g(w_i, x)
        ineq_jac, ineq_rhs: ∇_w h, h(w_i)
        grad: ∇_w φ(w_i)
        reg_delta: 풀이 시 hess에 더하는 δ ≥ 0
    """

    hess: sp.csr_matrix
    eq_jac: sp.csr_matrix
    eq_rhs: np.ndarray
    ineq_jac: sp.csr_matrix
    ineq_rhs: np.ndarray
    grad: np.ndarray
    reg_delta: float = 0.0

    def __post_init__(self) -> None:
        grad = np.asarray(self.grad, dtype=float).reshape(-1)
        n = grad.shape[0]
        eq_rhs = np.asarray(self.eq_rhs, dtype=float).reshape(-1)
        ineq_rhs = np.asarray(self.ineq_rhs, dtype=float).reshape(-1)
        hess = _as_csr(self.hess, (n, n), "hess")
        eq_jac = _as_csr(self.eq_jac, (eq_rhs.shape[0], n), "eq_jac")
        ineq_jac = _as_csr(self.ineq_jac, (ineq_rhs.shape[0], n), "ineq_jac")

        asym = abs(hess - hess.T)
        scale = max(1.0, abs(hess).max() if hess.nnz else 0.0)
        if asym.nnz and asym.max() > 1e-12 * scale:
            raise ValueError(f"QP hess가 대칭이 아닙니다: ‖B − Bᵀ‖_max = {asym.max():.3e}")
        if self.reg_delta < 0:
            raise ValueError(f"reg_delta는 0 이상이어야 합니다: {self.reg_delta}")

        object.__setattr__(self, "grad", grad)
        object.__setattr__(self, "eq_rhs", eq_rhs)
        object.__setattr__(self, "ineq_rhs", ineq_rhs)
        object.__setattr__(self, "hess", hess)
        object.__setattr__(self, "eq_jac", eq_jac)
        object.__setattr__(self, "ineq_jac", ineq_jac)

    @property
    def n_var(self) -> int:
        return self.grad.shape[0]

    @property
    def n_eq(self) -> int:
        return self.eq_rhs.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.ineq_rhs.shape[0]

    def effective_hessian(self) -> sp.csc_matrix:
        hess = self.hess
        if self.reg_delta > 0:
            hess = hess + self.reg_delta * sp.identity(self.n_var, format="csr")
        return sp.csc_matrix(hess)


@dataclass
class QpSolution:
    """
    QP 풀이 결과

    Attributes:
        dw: 원 변수 단계 Δw
        pi: 등식 승수
        eta: 부등식 승수 (≥ 0)
        status: solved | max_iter | infeasible
        active_set: 종료 시 작업 집합 (다음 풀이의 warm start)
        iterations: active-set 반복 수
    """

    dw: np.ndarray
    pi: np.ndarray
    eta: np.ndarray
    status: QpStatus
    active_set: tuple[int, ...] = ()
    iterations: int = 0

    @property
    def solved(self) -> bool:
        return self.status == "solved"


def regularize(sub: QpSubproblem, delta: float) -> QpSubproblem:
    """hess ← hess + δI (나머지 필드는 그대로)"""
    if delta < 0:
        raise ValueError(f"delta는 0 이상이어야 합니다: {delta}")
    if delta == 0:
        return sub
    return replace(sub, hess=sub.hess + delta * sp.identity(sub.n_var, format="csr"))


@dataclass
class QpSolver:
    """
    Primal active-set QP 풀이기

    풀이기 객체는 마지막 풀이의 작업 공간 통계를 보관하므로 실행 흐름마다
    하나씩 사용합니다.

    Attributes:
        max_iter: 반복 상한 (None이면 3·(n + m) + 100)
        feas_tol: 가능성 허용치 (max(1, ‖h‖∞) 기준)
        mult_tol: 승수 음수 판정 허용치
        degenerate_limit: 연속 퇴화 단계가 이 값 이상이면 Bland 규칙으로 전환
    """

    max_iter: int | None = None
    feas_tol: float = 1e-9
    mult_tol: float = 1e-10
    degenerate_limit: int = 5
    factorizations: int = field(default=0, init=False)

    # ========== EQP ==========

    def _solve_eqp(
        self,
        hess: sp.csc_matrix,
        sub: QpSubproblem,
        working: list[int],
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """작업 집합을 등식으로 둔 EQP의 (p, π, η_W)"""
        n, n_eq = sub.n_var, sub.n_eq
        rows = [sub.eq_jac]
        rhs = [-sub.grad, -sub.eq_rhs]
        if working:
            rows.append(sub.ineq_jac[working])
            rhs.append(-sub.ineq_rhs[working])
        cons = sp.vstack(rows, format="csc")
        n_c = cons.shape[0]

        if n_c:
            kkt = sp.bmat(
                [[hess, cons.T], [cons, sp.csc_matrix((n_c, n_c))]], format="csc"
            )
        else:
            kkt = hess
        self.factorizations += 1
        try:
            sol = splu(kkt).solve(np.concatenate(rhs))
        except RuntimeError as e:
            raise QpFailure(
                "indefinite",
                "EQP KKT 행렬이 특이합니다 (축소 Hessian이 양정치가 아님)",
            ) from e
        if not np.all(np.isfinite(sol)):
            raise QpFailure("indefinite", "EQP 해가 유한하지 않습니다")
        return sol[:n], sol[n : n + n_eq], sol[n + n_eq :]

    # ========== 작업 집합 ==========

    def _independent(
        self, sub: QpSubproblem, candidates: Iterable[int], basis: np.ndarray
    ) -> list[int]:
        """등식 행과 선택된 행에 선형 독립인 후보만 선호 순서대로 채택"""
        chosen: list[int] = []
        q = basis
        for i in candidates:
            row = sub.ineq_jac[i].toarray().ravel()
            norm = np.linalg.norm(row)
            if norm == 0:
                continue
            res = row - q @ (q.T @ row) if q.shape[1] else row
            res_norm = np.linalg.norm(res)
            if res_norm > 1e-9 * norm:
                chosen.append(i)
                q = np.column_stack([q, res / res_norm])
        return chosen

    def _eq_basis(self, sub: QpSubproblem) -> np.ndarray:
        if sub.n_eq == 0:
            return np.zeros((sub.n_var, 0))
        q, _ = np.linalg.qr(sub.eq_jac.toarray().T)
        return q

    def _tol(self, sub: QpSubproblem) -> float:
        scale = np.abs(sub.ineq_rhs).max() if sub.n_ineq else 0.0
        return self.feas_tol * max(1.0, scale)

    def _phase_one(self, sub: QpSubproblem) -> np.ndarray | None:
        """선형화 제약의 가능점 (없으면 None)"""
        res = linprog(
            np.zeros(sub.n_var),
            A_ub=sub.ineq_jac if sub.n_ineq else None,
            b_ub=-sub.ineq_rhs if sub.n_ineq else None,
            A_eq=sub.eq_jac if sub.n_eq else None,
            b_eq=-sub.eq_rhs if sub.n_eq else None,
            bounds=[(None, None)] * sub.n_var,
            method="highs",
            options={"primal_feasibility_tolerance": 1e-10},
        )
        if res.status == 0:
            return np.asarray(res.x, dtype=float)
        if res.status == 2:
            return None
        raise QpFailure("infeasible", f"Phase-1 LP 실패: {res.message}")

    @staticmethod
    def _ratio_test(
        slack: np.ndarray, gd: np.ndarray, excluded: set[int]
    ) -> tuple[float, int | None]:
        """단계 길이 α ∈ [0, 1]와 막는 제약 (동률이면 가장 작은 인덱스)"""
        scale = max(1.0, np.abs(gd).max()) if gd.size else 1.0
        mask = gd > 1e-14 * scale
        if excluded:
            idx = np.fromiter(excluded, dtype=int)
            mask[idx] = False
        if not np.any(mask):
            return 1.0, None
        cand = np.flatnonzero(mask)
        alphas = np.maximum(-slack[cand] / gd[cand], 0.0)
        alpha_min = alphas.min()
        if alpha_min >= 1.0:
            return 1.0, None
        ties = cand[alphas <= alpha_min + 1e-15]
        return float(alpha_min), int(ties.min())

    # ========== 풀이 ==========

    def solve(
        self, sub: QpSubproblem, warm_active_set: Iterable[int] | None = None
    ) -> QpSolution:
        """
        QP 풀이

        Args:
            sub: QP 부문제
            warm_active_set: 이전 풀이의 active set (선택)

        Returns:
            QpSolution (status: solved | max_iter | infeasible)

        Raises:
            QpFailure: 축소 Hessian이 양정치가 아니어서 KKT가 특이한 경우
        """
        n, m = sub.n_var, sub.n_ineq
        hess = sub.effective_hessian()
        max_iter = self.max_iter if self.max_iter is not None else 3 * (n + m) + 100
        tol = self._tol(sub)
        basis = self._eq_basis(sub)

        warm = sorted({int(i) for i in (warm_active_set or ()) if 0 <= int(i) < m})
        working = self._independent(sub, warm, basis)

        p, pi, eta_w = self._solve_eqp(hess, sub, working)
        slack = sub.ineq_jac @ p + sub.ineq_rhs if m else np.zeros(0)
        fresh = True
        if m and slack.max() > tol:
            feasible = self._phase_one(sub)
            if feasible is None:
                logger.debug("QP 선형화 제약 불가능 | n={n} | m={m}", n=n, m=m)
                return QpSolution(
                    dw=np.zeros(n),
                    pi=np.zeros(sub.n_eq),
                    eta=np.zeros(m),
                    status="infeasible",
                )
            slack_f = sub.ineq_jac @ feasible + sub.ineq_rhs
            alpha, blocking = self._ratio_test(slack_f, sub.ineq_jac @ (p - feasible), set())
            p = feasible + alpha * (p - feasible)
            slack = sub.ineq_jac @ p + sub.ineq_rhs
            active_now = set(np.flatnonzero(np.abs(slack) <= tol).tolist())
            prefer = [i for i in warm if i in active_now]
            if blocking is not None:
                prefer.append(blocking)
            working = self._independent(sub, prefer, basis)
            fresh = False

        degenerate = 0
        for it in range(1, max_iter + 1):
            if not fresh:
                p_hat, pi, eta_w = self._solve_eqp(hess, sub, working)
            else:
                p_hat = p
                fresh = False
            d = p_hat - p

            if np.linalg.norm(d) <= 1e-12 * max(1.0, np.linalg.norm(p)):
                negative = [
                    (float(eta), idx)
                    for eta, idx in zip(eta_w, working)
                    if eta < -self.mult_tol
                ]
                if not negative:
                    return self._finish(sub, p, pi, eta_w, working, it)
                if degenerate >= self.degenerate_limit:
                    leave = min(idx for _, idx in negative)
                else:
                    leave = min(negative)[1]
                working.remove(leave)
                continue

            slack = sub.ineq_jac @ p + sub.ineq_rhs
            alpha, blocking = self._ratio_test(slack, sub.ineq_jac @ d, set(working))
            p = p + alpha * d
            if blocking is None:
                p = p_hat
                fresh = True
                degenerate = 0
                continue
            degenerate = degenerate + 1 if alpha <= 1e-14 else 0
            working.append(blocking)

        logger.warning("QP 반복 상한 도달 | max_iter={n}", n=max_iter)
        eta = np.zeros(m)
        return QpSolution(
            dw=p,
            pi=pi,
            eta=eta,
            status="max_iter",
            active_set=tuple(sorted(working)),
            iterations=max_iter,
        )

    def _finish(
        self,
        sub: QpSubproblem,
        p: np.ndarray,
        pi: np.ndarray,
        eta_w: np.ndarray,
        working: list[int],
        iterations: int,
    ) -> QpSolution:
        eta = np.zeros(sub.n_ineq)
        if working:
            eta[working] = np.maximum(eta_w, 0.0)
        return QpSolution(
            dw=p,
            pi=np.asarray(pi, dtype=float),
            eta=eta,
            status="solved",
            active_set=tuple(sorted(working)),
            iterations=iterations,
        )


def solve_qp(
    sub: QpSubproblem, warm_active_set: Iterable[int] | None = None
) -> QpSolution:
    """기본 설정 QpSolver로 한 번 풀이"""
    return QpSolver().solve(sub, warm_active_set)
