"""
출력 형식 - CSV 로그, 행렬 파일, SVG 그림, 실행 매니페스트
"""

from tdo_mpc.artifacts.logs import COLUMNS, parse_log, read_log, read_table, write_log, write_table
from tdo_mpc.artifacts.manifest import RunManifest, make_run_id
from tdo_mpc.artifacts.matrices import (
    dump_subproblem,
    load_matrix,
    load_subproblem,
    load_terminal,
    save_matrix,
    save_terminal,
)

__all__ = [
    "COLUMNS",
    "RunManifest",
    "dump_subproblem",
    "load_matrix",
    "load_subproblem",
    "load_terminal",
    "make_run_id",
    "parse_log",
    "read_log",
    "read_table",
    "save_matrix",
    "save_terminal",
    "write_log",
    "write_table",
]
