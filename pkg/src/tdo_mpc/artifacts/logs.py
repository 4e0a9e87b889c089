"""
ClosedLoopLog CSV 형식

파일은 `# key=value` 헤더 줄 뒤에 고정 순서의 CSV가 옵니다.

헤더:
    run_id, controller, seed, rng, config (정렬된 JSON 한 줄)

열 순서:
    k, y, psi, nu, omega, delta_f, delta_r, ddelta_f, ddelta_r, d, pi, e_norm,
    m_<상태>_ub ×6, m_<상태>_lb ×6, m_<입력>_ub ×2, m_<입력>_lb ×2,
    stage_cost, cumulative_cost, event, clamped,
    mode, ell, pi_before, pi_after, reg_delta, active_set_size, qp_iterations

실수는 '%.17g'로 쓰므로 읽은 값이 쓴 값과 비트 단위로 같습니다. 계산 시간은
실행마다 달라지므로 CSV에는 넣지 않습니다.

Usage:
    from tdo_mpc.artifacts.logs import read_log, write_log

    write_log(log, "out/log.csv", run_id="3f2a9c1b0d4e")
    header, log = read_log("out/log.csv")
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from tdo_mpc.core.config import INPUT_NAMES, STATE_NAMES
from tdo_mpc.core.simulation import ClosedLoopLog, StepRecord

STATE_MARGIN_COLUMNS = [f"m_{n}_ub" for n in STATE_NAMES] + [f"m_{n}_lb" for n in STATE_NAMES]
INPUT_MARGIN_COLUMNS = [f"m_{n}_ub" for n in INPUT_NAMES] + [f"m_{n}_lb" for n in INPUT_NAMES]

COLUMNS: list[str] = [
    "k",
    *STATE_NAMES,
    *INPUT_NAMES,
    "d",
    "pi",
    "e_norm",
    *STATE_MARGIN_COLUMNS,
    *INPUT_MARGIN_COLUMNS,
    "stage_cost",
    "cumulative_cost",
    "event",
    "clamped",
    "mode",
    "ell",
    "pi_before",
    "pi_after",
    "reg_delta",
    "active_set_size",
    "qp_iterations",
]

HEADER_KEYS = ("run_id", "controller", "seed", "rng", "config")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _row(rec: StepRecord) -> list[str]:
    return [
        str(rec.k),
        *(_fmt(v) for v in rec.x),
        *(_fmt(v) for v in rec.u),
        _fmt(rec.d),
        _fmt(rec.pi),
        _fmt(rec.e_norm),
        *(_fmt(v) for v in rec.state_margins),
        *(_fmt(v) for v in rec.input_margins),
        _fmt(rec.stage_cost),
        _fmt(rec.cumulative_cost),
        rec.event,
        "1" if rec.clamped else "0",
        rec.mode,
        str(rec.ell),
        _fmt(rec.pi_before),
        _fmt(rec.pi_after),
        _fmt(rec.reg_delta),
        str(rec.active_set_size),
        str(rec.qp_iterations),
    ]


def format_log(log: ClosedLoopLog, run_id: str = "") -> str:
    """로그를 CSV 문자열로 변환"""
    buf = io.StringIO()
    header = {
        "run_id": run_id,
        "controller": log.controller,
        "seed": str(log.seed),
        "rng": log.rng,
        "config": json.dumps(log.config, sort_keys=True, separators=(",", ":")),
    }
    for key in HEADER_KEYS:
        buf.write(f"# {key}={header[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for rec in log.records:
        writer.writerow(_row(rec))
    if log.x_final is not None:
        buf.write("# x_final=" + ",".join(_fmt(v) for v in log.x_final) + "\n")
    return buf.getvalue()


def write_log(log: ClosedLoopLog, path: str | Path, run_id: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_log(log, run_id), encoding="utf-8")
    return path


def parse_log(text: str) -> tuple[dict[str, str], ClosedLoopLog]:
    """
    CSV 문자열을 헤더 사전과 ClosedLoopLog로 복원

    Raises:
        ValueError: 열 순서가 다르거나 헤더가 빠진 경우
    """
    header: dict[str, str] = {}
    body: list[str] = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            header[key] = value
        elif line:
            body.append(line)

    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise ValueError(f"로그 헤더 누락: {', '.join(missing)}")

    reader = csv.reader(body)
    columns = next(reader, None)
    if columns != COLUMNS:
        raise ValueError("로그 열 순서가 문서화된 형식과 다릅니다")

    log = ClosedLoopLog(
        controller=header["controller"],
        seed=int(header["seed"]),
        rng=header["rng"],
        config=json.loads(header["config"]),
    )
    for raw in reader:
        row = dict(zip(COLUMNS, raw))
        log.records.append(
            StepRecord(
                k=int(row["k"]),
                x=np.array([float(row[n]) for n in STATE_NAMES]),
                u=np.array([float(row[n]) for n in INPUT_NAMES]),
                d=float(row["d"]),
                pi=float(row["pi"]),
                e_norm=float(row["e_norm"]),
                state_margins=np.array([float(row[c]) for c in STATE_MARGIN_COLUMNS]),
                input_margins=np.array([float(row[c]) for c in INPUT_MARGIN_COLUMNS]),
                stage_cost=float(row["stage_cost"]),
                cumulative_cost=float(row["cumulative_cost"]),
                event=row["event"],
                clamped=row["clamped"] == "1",
                mode=row["mode"],
                ell=int(row["ell"]),
                pi_before=float(row["pi_before"]),
                pi_after=float(row["pi_after"]),
                reg_delta=float(row["reg_delta"]),
                active_set_size=int(row["active_set_size"]),
                qp_iterations=int(row["qp_iterations"]),
            )
        )
    if "x_final" in header:
        log.x_final = np.array([float(v) for v in header.pop("x_final").split(",")])
    return header, log


def read_log(path: str | Path) -> tuple[dict[str, str], ClosedLoopLog]:
    return parse_log(Path(path).read_text(encoding="utf-8"))


def write_table(rows: list[dict], path: str | Path, columns: list[str] | None = None) -> Path:
    """요약 표 (스윕, 이득, ROA) CSV 저장"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(
            [_fmt(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns]
        )
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_table(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
