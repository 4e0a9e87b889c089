"""
SVG 그림 - 궤적, 제어기 비교, ℓ 스윕, 초기 조건 격자

matplotlib Agg 백엔드로 그리며, 글꼴은 텍스트로 남기고 해시 솔트와 날짜
메타데이터를 고정해 같은 입력이면 같은 SVG가 나옵니다. 외부 참조가 없는
단일 SVG 문서입니다.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from tdo_mpc.core.simulation import ClosedLoopLog, RoaRun, SweepCell  # noqa: E402

_RC = {
    "svg.fonttype": "none",
    "svg.hashsalt": "tdo-mpc",
    "figure.figsize": (8.0, 6.0),
    "axes.grid": True,
}


def _time(log: ClosedLoopLog) -> np.ndarray:
    ts = float(log.config.get("vehicle", {}).get("ts", 0.04))
    return np.arange(len(log.states)) * ts


def _bound(log: ClosedLoopLog, key: str, index: int) -> float | None:
    values = log.config.get("ocp", {}).get(key)
    return float(values[index]) if values else None


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _rule(ax, value: float | None, scale: float = 1.0) -> None:
    if value is not None:
        ax.axhline(value * scale, color="k", linestyle="--", linewidth=0.8)


def plot_trajectory(log: ClosedLoopLog, path: str | Path) -> Path:
    """y, ψ의 시간 궤적 (상태 경계선 포함)"""
    with plt.rc_context(_RC):
        fig, (ax_y, ax_psi) = plt.subplots(2, 1, sharex=True)
        t = _time(log)
        states = log.states
        ax_y.plot(t, states[:, 0], label=log.controller)
        _rule(ax_y, _bound(log, "x_ub", 0))
        _rule(ax_y, _bound(log, "x_lb", 0))
        ax_y.set_ylabel("y [m]")
        ax_psi.plot(t, np.degrees(states[:, 1]))
        _rule(ax_psi, _bound(log, "x_ub", 1), np.degrees(1.0))
        _rule(ax_psi, _bound(log, "x_lb", 1), np.degrees(1.0))
        ax_psi.set_ylabel("psi [deg]")
        ax_psi.set_xlabel("t [s]")
        ax_y.legend()
        return _save(fig, path)


def plot_comparison(logs: Mapping[str, ClosedLoopLog], path: str | Path) -> Path:
    """제어기 비교: y, ψ, 입력, 자연 잔차"""
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(4, 1, sharex=True, figsize=(8.0, 9.0))
        for label, log in logs.items():
            t = _time(log)
            axes[0].plot(t, log.states[:, 0], label=label)
            axes[1].plot(t, np.degrees(log.states[:, 1]), label=label)
            axes[2].step(t[:-1], log.inputs[:, 0], where="post", label=label)
            pi = log.residuals
            if np.any(np.isfinite(pi)):
                axes[3].semilogy(t[:-1], np.maximum(pi, 1e-16), label=label)
        first = next(iter(logs.values()))
        _rule(axes[1], _bound(first, "x_ub", 1), np.degrees(1.0))
        _rule(axes[1], _bound(first, "x_lb", 1), np.degrees(1.0))
        axes[0].set_ylabel("y [m]")
        axes[1].set_ylabel("psi [deg]")
        axes[2].set_ylabel("ddelta_f [rad/s]")
        axes[3].set_ylabel("pi")
        axes[3].set_xlabel("t [s]")
        axes[0].legend()
        return _save(fig, path)


def plot_sweep(cells: Sequence[SweepCell], path: str | Path) -> Path:
    """(mode, ℓ) 스윕: 잔차 궤적과 ψ 궤적 (요 제약선 포함)"""
    with plt.rc_context(_RC):
        fig, (ax_pi, ax_psi) = plt.subplots(2, 1, sharex=True)
        bound = None
        for cell in cells:
            if cell.log is None:
                continue
            t = _time(cell.log)
            label = f"{cell.mode.upper()} l={cell.ell}"
            ax_pi.semilogy(t[:-1], np.maximum(cell.log.residuals, 1e-16), label=label)
            ax_psi.plot(t, np.degrees(cell.log.states[:, 1]), label=label)
            bound = bound if bound is not None else _bound(cell.log, "x_ub", 1)
        _rule(ax_psi, bound, np.degrees(1.0))
        if bound is not None:
            _rule(ax_psi, -bound, np.degrees(1.0))
        ax_pi.set_ylabel("pi")
        ax_psi.set_ylabel("psi [deg]")
        ax_psi.set_xlabel("t [s]")
        ax_pi.legend()
        return _save(fig, path)


def plot_roa(runs: Sequence[RoaRun], path: str | Path) -> Path:
    """여러 초기 조건의 y 궤적 겹쳐 그리기"""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for run in runs:
            if run.log is None:
                continue
            style = "-" if run.converged else ":"
            ax.plot(_time(run.log), run.log.states[:, 0], style, linewidth=1.0)
        ax.set_ylabel("y [m]")
        ax.set_xlabel("t [s]")
        return _save(fig, path)
