"""
행렬 파일 - 종단 요소와 QP 부문제 덤프

종단 요소는 디렉터리 하나에 평문 행렬 파일로 저장합니다:
    terminal_A.txt   A_f (행마다 한 줄)
    terminal_b.txt   b_f
    terminal_qf.txt  Q_f

모든 값은 '%.17g'로 쓰므로 다시 읽으면 비트 단위로 같습니다.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from tdo_mpc.core.polytope import Polytope
from tdo_mpc.core.qp import QpSubproblem

TERMINAL_A = "terminal_A.txt"
TERMINAL_B = "terminal_b.txt"
TERMINAL_QF = "terminal_qf.txt"


def save_matrix(path: str | Path, mat: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.atleast_2d(np.asarray(mat, dtype=float)), fmt="%.17g")
    return path


def load_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"행렬 파일을 찾을 수 없습니다: {path}")
    return np.loadtxt(path, ndmin=2)


def save_terminal(directory: str | Path, qf: np.ndarray, polytope: Polytope) -> list[Path]:
    """종단 요소 저장 (b_f는 한 줄에 하나씩)"""
    directory = Path(directory)
    return [
        save_matrix(directory / TERMINAL_A, polytope.a_mat),
        save_matrix(directory / TERMINAL_B, polytope.b_vec.reshape(-1, 1)),
        save_matrix(directory / TERMINAL_QF, qf),
    ]


def load_terminal(directory: str | Path) -> tuple[np.ndarray, Polytope]:
    """
    (Q_f, 종단 집합) 로드

    Raises:
        FileNotFoundError: 파일이 없는 경우
        ValueError: A_f와 b_f의 행 수가 다른 경우
    """
    directory = Path(directory)
    a_mat = load_matrix(directory / TERMINAL_A)
    b_vec = load_matrix(directory / TERMINAL_B).reshape(-1)
    qf = load_matrix(directory / TERMINAL_QF)
    if a_mat.shape[0] != b_vec.shape[0]:
        raise ValueError(f"A_f 행 수 {a_mat.shape[0]}와 b_f 길이 {b_vec.shape[0]}가 다릅니다")
    return qf, Polytope(a_mat, b_vec)


# 덤프 블록 순서
_SUBPROBLEM_BLOCKS = ("hess", "grad", "eq_jac", "eq_rhs", "ineq_jac", "ineq_rhs")


def dump_subproblem(path: str | Path, sub: QpSubproblem) -> Path:
    """
    QP 부문제를 평문으로 저장 (오프라인 디버깅용)

    형식:
        # qp_subproblem n_var=<n> n_eq=<m> n_ineq=<p> reg_delta=<δ>
        # <블록 이름> <행>x<열>
        <행마다 한 줄, '%.17g'>
        ...

    블록은 hess, grad, eq_jac, eq_rhs, ineq_jac, ineq_rhs 순서이며 벡터는 열 하나로
    씁니다. 희소 행렬도 조밀하게 씁니다.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blocks = {
        "hess": sub.hess.toarray(),
        "grad": sub.grad.reshape(-1, 1),
        "eq_jac": sub.eq_jac.toarray(),
        "eq_rhs": sub.eq_rhs.reshape(-1, 1),
        "ineq_jac": sub.ineq_jac.toarray(),
        "ineq_rhs": sub.ineq_rhs.reshape(-1, 1),
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(
            f"# qp_subproblem n_var={sub.n_var} n_eq={sub.n_eq} n_ineq={sub.n_ineq} "
            f"reg_delta={sub.reg_delta:.17g}\n"
        )
        for name in _SUBPROBLEM_BLOCKS:
            mat = blocks[name]
            fh.write(f"# {name} {mat.shape[0]}x{mat.shape[1]}\n")
            if mat.size:
                np.savetxt(fh, mat, fmt="%.17g")
    return path


def load_subproblem(path: str | Path) -> QpSubproblem:
    """
    dump_subproblem 파일 로드

    Raises:
        FileNotFoundError: 파일이 없는 경우
        ValueError: 헤더나 블록 형식이 맞지 않는 경우
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"QP 덤프 파일을 찾을 수 없습니다: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# qp_subproblem "):
        raise ValueError(f"QP 덤프 헤더가 없습니다: {path}")
    header = dict(item.split("=", 1) for item in lines[0].split()[2:])

    blocks: dict[str, np.ndarray] = {}
    pos = 1
    for name in _SUBPROBLEM_BLOCKS:
        parts = lines[pos].split() if pos < len(lines) else []
        if len(parts) != 3 or parts[1] != name:
            raise ValueError(f"QP 덤프 블록 '{name}'이 기대 위치에 없습니다 (줄 {pos + 1})")
        rows, cols = (int(v) for v in parts[2].split("x"))
        body = lines[pos + 1 : pos + 1 + rows]
        if len(body) != rows:
            raise ValueError(f"QP 덤프 블록 '{name}'의 행 수가 부족합니다")
        blocks[name] = np.loadtxt(body, ndmin=2).reshape(rows, cols) if rows else np.zeros((0, cols))
        pos += 1 + rows

    return QpSubproblem(
        hess=sp.csr_matrix(blocks["hess"]),
        eq_jac=sp.csr_matrix(blocks["eq_jac"]),
        eq_rhs=blocks["eq_rhs"].reshape(-1),
        ineq_jac=sp.csr_matrix(blocks["ineq_jac"]),
        ineq_rhs=blocks["ineq_rhs"].reshape(-1),
        grad=blocks["grad"].reshape(-1),
        reg_delta=float(header["reg_delta"]),
    )
