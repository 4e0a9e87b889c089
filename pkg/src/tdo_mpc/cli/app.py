"""
TDO-MPC CLI
Click 기반의 커맨드라인 인터페이스

명령: simulate, sweep, terminal-set, diagnose, roa-grid
종료 코드: 0 정상 (경고는 로그로), 1 설정 오류, 2 풀이기 치명 오류
"""

from __future__ import annotations

import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np
from loguru import logger

from tdo_mpc.artifacts.logs import write_log, write_table
from tdo_mpc.artifacts.manifest import RunManifest
from tdo_mpc.artifacts.matrices import load_terminal, save_terminal
from tdo_mpc.core.config import ExperimentConfig, HessianMode, load_config
from tdo_mpc.core.errors import ConfigError, FitRefusedError, HypothesisViolatedError, TdoError

EXIT_CONFIG = 1
EXIT_SOLVER = 2

LOG_FORMAT = "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | {message}"


def configure_logging(verbose: bool) -> None:
    """stderr 싱크 하나 (기본 INFO, --verbose면 DEBUG)"""
    logger.remove()
    logger.add(
        sys.stderr,
        level="DEBUG" if verbose else "INFO",
        colorize=True,
        format=LOG_FORMAT,
    )


def _parse_floats(value: str | None, name: str) -> tuple[float, ...] | None:
    if value is None:
        return None
    try:
        return tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError as e:
        raise ConfigError(f"--{name} 값을 해석할 수 없습니다: {value!r}") from e


def _parse_ints(value: str, name: str) -> list[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"--{name} 값을 해석할 수 없습니다: {value!r}") from e


def _parse_grid(value: str | None) -> list[tuple[float, float]] | None:
    """'y0:psi0_deg;y0:psi0_deg' 형식"""
    if value is None:
        return None
    grid = []
    for item in value.split(";"):
        if not item.strip():
            continue
        try:
            y0, psi_deg = item.split(":")
            grid.append((float(y0), float(np.radians(float(psi_deg)))))
        except ValueError as e:
            raise ConfigError(f"--grid 항목을 해석할 수 없습니다: {item!r}") from e
    return grid


def _guarded(action: Callable[[], None]) -> None:
    """오류를 문서화된 종료 코드로 변환"""
    try:
        action()
    except (ConfigError, ValueError, FileNotFoundError) as e:
        logger.error("설정 오류 | {err}", err=e)
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except TdoError as e:
        logger.error("풀이기 오류 | {type} | {err}", type=type(e).__name__, err=e)
        click.echo(f"Error: {e}", err=True)
        sys.exit(EXIT_SOLVER)


def _load(config_path: str | None, **scenario: Any) -> ExperimentConfig:
    config = load_config(config_path)
    changes = {k: v for k, v in scenario.items() if v is not None}
    return config.with_scenario(**changes) if changes else config


def _setup(config: ExperimentConfig, terminal_dir: str | None):
    from tdo_mpc.core.simulation import BenchmarkSetup

    if terminal_dir:
        qf, poly = load_terminal(terminal_dir)
        return BenchmarkSetup.from_config(config, qf=qf, terminal_set=poly)
    return BenchmarkSetup.from_config(config)


def _sqp_override(config: ExperimentConfig, mode: str | None, ell: int | None):
    sqp = config.scenario.sqp
    if mode is not None:
        sqp = replace(sqp, mode=HessianMode.parse(mode))
    if ell is not None:
        sqp = replace(sqp, ell=ell)
    return sqp


# ========== 공통 옵션 ==========


def common_options(func):
    options = [
        click.option("--config", "-c", "config_path", type=click.Path(dir_okay=False), help="JSON 설정 파일"),
        click.option(
            "--out-dir",
            "-o",
            type=click.Path(file_okay=False),
            default="out",
            envvar="TDO_OUT_DIR",
            show_default=True,
            help="결과물을 저장할 디렉터리 (환경 변수 TDO_OUT_DIR)",
        ),
        click.option("--seed", type=int, default=None, help="돌풍 난수 시드 (설정 파일 값 대체)"),
        click.option(
            "--terminal-dir",
            type=click.Path(file_okay=False),
            default=None,
            help="terminal-set 출력 디렉터리 (없으면 종단 요소를 새로 계산)",
        ),
        click.option("--verbose", "-v", is_flag=True, help="상세 로그 출력"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
def cli() -> None:
    """TDO-MPC CLI 도구"""
    pass


# ========== simulate ==========


@cli.command()
@common_options
@click.option(
    "--controller",
    type=click.Choice(["rti", "tdo", "optimal", "lqr"], case_sensitive=False),
    default=None,
    help="제어기 (rti = Gauss-Newton, ℓ=1 TDO)",
)
@click.option("--mode", type=str, default=None, help="Hessian 방식 (gn, jn, jn_aug)")
@click.option("--ell", type=int, default=None, help="샘플링 시점당 SQP 반복 수")
@click.option("--x0", type=str, default=None, help="초기 상태 (쉼표 구분 6개 값)")
@click.option("--no-disturbance", is_flag=True, help="돌풍 끄기")
@click.option("--steps", type=int, default=None, help="시뮬레이션 스텝 수")
@click.option("--init", type=click.Choice(["cold", "presolve"]), default=None, help="최적화기 초기화")
@click.option("--compute-error", is_flag=True, help="최적 해 대비 오차 ‖e_k‖ 기록")
def simulate(
    config_path: str | None,
    out_dir: str,
    seed: int | None,
    terminal_dir: str | None,
    verbose: bool,
    controller: str | None,
    mode: str | None,
    ell: int | None,
    x0: str | None,
    no_disturbance: bool,
    steps: int | None,
    init: str | None,
    compute_error: bool,
) -> None:
    """시나리오 하나를 실행하고 log.csv, traj.svg를 저장합니다."""
    configure_logging(verbose)

    def action() -> None:
        from tdo_mpc.artifacts.plots import plot_trajectory
        from tdo_mpc.core.simulation import run_scenario

        config = _load(
            config_path,
            seed=seed,
            x0=_parse_floats(x0, "x0"),
            steps=steps,
            init=init,
            disturbance_on=False if no_disturbance else None,
            compute_error=True if compute_error else None,
        )
        kind = controller.lower() if controller else None
        sqp = _sqp_override(config, mode, ell)
        if kind == "rti":
            sqp = replace(sqp, mode=HessianMode(), ell=1)
            kind = "tdo"
        config = config.with_scenario(sqp=sqp, **({"controller": kind} if kind else {}))

        out = Path(out_dir)
        manifest = RunManifest.start(
            "simulate", config.to_dict(), config.scenario.seed, out, config_path
        )
        started = time.perf_counter()
        dump_dir = out / "qp_dumps"
        log = run_scenario(config, _setup(config, terminal_dir), dump_dir=dump_dir)
        manifest.timings = {
            "total": time.perf_counter() - started,
            "mean_step": float(np.mean(log.wall_times)),
            "max_step": float(np.max(log.wall_times)),
        }
        manifest.summary = log.summary()
        manifest.add_output(write_log(log, out / "log.csv", manifest.run_id))
        manifest.add_output(plot_trajectory(log, out / "traj.svg"))
        for dump in sorted(dump_dir.glob("qp_*.txt")):
            manifest.add_output(dump)
        manifest.write()

        s = manifest.summary
        click.echo(
            f"완료: 누적 비용 {s['cumulative_cost']:.4f}, 최대 |psi| {s['max_abs_psi_deg']:.3f}°, "
            f"클램프 {s['clamp_count']}회, 이벤트 {s['event_count']}회 -> {out}"
        )

    _guarded(action)


# ========== sweep ==========


@cli.command()
@common_options
@click.option("--ell", "ells", type=str, default="1,2", show_default=True, help="ℓ 목록 (쉼표 구분)")
@click.option("--mode", "modes", type=str, default="gn,jn", show_default=True, help="Hessian 방식 목록")
@click.option(
    "--workers",
    "-w",
    type=int,
    default=os.cpu_count() or 1,
    help=f"병렬 처리를 위한 프로세스 수 (기본값: CPU 코어 수, {os.cpu_count()})",
)
@click.option("--no-disturbance", is_flag=True, help="돌풍 끄기")
@click.option("--steps", type=int, default=None, help="시뮬레이션 스텝 수")
def sweep(
    config_path: str | None,
    out_dir: str,
    seed: int | None,
    terminal_dir: str | None,
    verbose: bool,
    ells: str,
    modes: str,
    workers: int,
    no_disturbance: bool,
    steps: int | None,
) -> None:
    """(mode, ℓ) 곱집합을 같은 시드로 실행하고 비교 표와 그림을 저장합니다."""
    configure_logging(verbose)

    def action() -> None:
        from tdo_mpc.artifacts.plots import plot_sweep
        from tdo_mpc.core.simulation import sweep_ell

        ell_list = _parse_ints(ells, "ell")
        mode_list = [HessianMode.parse(m) for m in modes.split(",") if m.strip()]
        if not ell_list or not mode_list:
            raise ConfigError("--ell과 --mode는 비어 있을 수 없습니다")
        config = _load(
            config_path,
            seed=seed,
            steps=steps,
            disturbance_on=False if no_disturbance else None,
        )
        out = Path(out_dir)
        manifest = RunManifest.start("sweep", config.to_dict(), config.scenario.seed, out, config_path)
        click.echo(f"총 {len(ell_list) * len(mode_list)}개의 시나리오를 실행합니다 (Workers: {workers})...")

        cells = sweep_ell(_setup(config, terminal_dir), config, ell_list, mode_list, workers=max(1, workers))
        for cell in cells:
            if cell.log is not None:
                name = f"sweep_{cell.mode}_l{cell.ell}.csv"
                manifest.add_output(write_log(cell.log, out / name, manifest.run_id))
            else:
                click.echo(f"[Fail] {cell.mode} l={cell.ell}: {cell.error}", err=True)
        rows = [cell.summary_row() for cell in cells]
        manifest.add_output(write_table(rows, out / "sweep_summary.csv"))
        manifest.add_output(plot_sweep(cells, out / "sweep.svg"))
        manifest.summary = {"cells": rows}
        manifest.write()

        for row in rows:
            click.echo(
                f"{row['mode']:>6} l={row['ell']}: 최대 |psi| {row['max_abs_psi_deg']:.3f}°, "
                f"최대 pi {row['max_pi']:.3e}, 누적 비용 {row['cumulative_cost']:.4f}"
            )

    _guarded(action)


# ========== terminal-set ==========


@cli.command("terminal-set")
@common_options
@click.option("--cap", type=int, default=500, show_default=True, help="O_∞ 반복 상한")
@click.option("--samples", type=int, default=10_000, show_default=True, help="불변성 검사 표본 수")
def terminal_set(
    config_path: str | None,
    out_dir: str,
    seed: int | None,
    terminal_dir: str | None,
    verbose: bool,
    cap: int,
    samples: int,
) -> None:
    """DARE 종단 비용과 O_∞ 종단 집합을 계산해 행렬 파일로 저장합니다."""
    configure_logging(verbose)

    def action() -> None:
        from tdo_mpc.core.invariant_set import compute_terminal_ingredients, validate_invariance
        from tdo_mpc.core.models import VehicleModel

        config = _load(config_path, seed=seed)
        out = Path(terminal_dir or out_dir)
        manifest = RunManifest.start("terminal-set", config.to_dict(), config.scenario.seed, out, config_path)
        terminal = compute_terminal_ingredients(VehicleModel(config.vehicle), config.ocp, cap=cap)
        report = validate_invariance(
            terminal.polytope, terminal.a_cl, terminal.constraints, samples=samples, seed=config.scenario.seed
        )
        for path in save_terminal(out, terminal.qf, terminal.polytope):
            manifest.add_output(path)
        manifest.summary = {
            "dare_residual": terminal.dare_residual,
            "rows": terminal.polytope.n_rows,
            "certified": terminal.certified,
            "invariance_violations": report.invariance_violations,
            "admissibility_violations": report.admissibility_violations,
        }
        manifest.write()

        click.echo(f"DARE 잔차: {terminal.dare_residual:.3e}")
        click.echo(f"종단 집합: {terminal.polytope.n_rows}행, 인증 {'예' if terminal.certified else '아니오'}")
        click.echo(
            f"불변성 검사: 표본 {report.samples}, 불변 위반 {report.invariance_violations}, "
            f"허용 위반 {report.admissibility_violations}"
        )

    _guarded(action)


# ========== diagnose ==========


@cli.command()
@common_options
@click.option("--radii", type=str, default="1e-3,3e-3,1e-2,3e-2", show_default=True, help="섭동 반경 목록")
@click.option("--trials", type=int, default=10, show_default=True, help="반경당 시행 수")
@click.option("--max-ell", type=int, default=10, show_default=True, help="이득 표의 최대 ℓ")
@click.option("--segment-points", type=int, default=8, show_default=True, help="Lipschitz 추정 선분 표본 수")
@click.option("--du-radii", type=str, default=None, help="γ₃ 기울기 추정용 Δu 반경 (주면 소이득 검사 수행)")
def diagnose(
    config_path: str | None,
    out_dir: str,
    seed: int | None,
    terminal_dir: str | None,
    verbose: bool,
    radii: str,
    trials: int,
    max_ell: int,
    segment_points: int,
    du_radii: str | None,
) -> None:
    """수렴 속도 적합, 이득 표, LICQ/SSOSC 모니터를 실행합니다."""
    configure_logging(verbose)

    def action() -> None:
        from tdo_mpc.core import diagnostics as diag
        from tdo_mpc.core.controller import oracle_config
        from tdo_mpc.core.sqp import SqpSolver

        config = _load(config_path, seed=seed)
        setup = _setup(config, terminal_dir)
        instance = setup.build_instance()
        x = np.asarray(config.scenario.x0, dtype=float)
        radius_list = _parse_floats(radii, "radii") or ()
        out = Path(out_dir)
        manifest = RunManifest.start("diagnose", config.to_dict(), config.scenario.seed, out, config_path)

        z_star, _ = SqpSolver(
            instance, replace(oracle_config(), kkt_tol=diag.ORACLE_TOL)
        ).solve_to_tolerance(instance.zero_point(), x)
        licq = diag.licq_monitor(instance, z_star, x)
        ssosc = diag.ssosc_monitor(instance, z_star, x)

        segment = [x * t for t in np.linspace(1.0, 0.0, max(2, segment_points))]
        lipschitz = diag.estimate_solution_lipschitz(instance, segment)

        fits: dict[str, Any] = {}
        fit_rows = []
        for mode in (HessianMode(), HessianMode(kind="josephy_newton")):
            name = mode.short_name
            try:
                fit = diag.fit_rate(
                    instance, x, mode, radius_list, trials, seed=config.scenario.seed, z_star=z_star
                )
            except FitRefusedError as e:
                click.echo(f"[Fail] {name} 속도 적합: {e}", err=True)
                continue
            fits[name] = fit
            fit_rows.append(
                {
                    "mode": name,
                    "q_hat": fit.q_hat,
                    "eta_hat": fit.eta_hat,
                    "eps_hat": fit.eps_hat,
                    "r_squared": fit.r_squared,
                    "samples": fit.sample_count,
                }
            )
        if fit_rows:
            manifest.add_output(write_table(fit_rows, out / "rate_fits.csv"))

        gains_summary: dict[str, Any] = {}
        gamma3 = None
        if du_radii:
            gamma3 = diag.estimate_gamma3_slope(
                instance, setup.model(), x, _parse_floats(du_radii, "du-radii") or (), seed=config.scenario.seed
            )
        for name, fit in fits.items():
            try:
                gains = diag.compute_gains(fit, lipschitz.b_hat, range(1, max_ell + 1))
            except HypothesisViolatedError as e:
                click.echo(f"[Fail] {name} 이득 계산: {e}", err=True)
                continue
            manifest.add_output(write_table(gains.rows(), out / f"gains_{name}.csv"))
            entry: dict[str, Any] = {"valid": gains.valid}
            if gamma3 is not None:
                check = diag.small_gain_check(gains, 1.0, gamma3.slope, float(max(gamma3.radii)))
                entry.update(small_gain=check.satisfied, ell_star=check.ell_star, note=check.note)
            gains_summary[name] = entry

        manifest.summary = {
            "licq_deficiency": licq.deficiency,
            "ssosc_min_eig": ssosc.min_eig,
            "b_hat": lipschitz.b_hat,
            "fits": fit_rows,
            "gains": gains_summary,
            "gamma3_slope": gamma3.slope if gamma3 else None,
        }
        manifest.write()

        click.echo("=== 진단 요약 ===")
        click.echo(f"LICQ 랭크 결손: {licq.deficiency}")
        click.echo(f"SSOSC 최소 고유값: {ssosc.min_eig:.4e}")
        click.echo(f"해 사상 Lipschitz 추정 b̂: {lipschitz.b_hat:.4e}")
        for row in fit_rows:
            click.echo(
                f"{row['mode']:>3}: q̂ {row['q_hat']:.3f}, η̂ {row['eta_hat']:.3e}, "
                f"ε̂ {row['eps_hat']:.1e}, R² {row['r_squared']:.3f}"
            )
        for name, entry in gains_summary.items():
            if "ell_star" in entry:
                click.echo(f"{name}: 소이득 ℓ* = {entry['ell_star']} ({entry['note']})")

    _guarded(action)


# ========== roa-grid ==========


@cli.command("roa-grid")
@common_options
@click.option("--grid", type=str, default=None, help="'y0:psi0_deg;…' 형식 (기본값: 15개 격자)")
@click.option(
    "--workers",
    "-w",
    type=int,
    default=os.cpu_count() or 1,
    help=f"병렬 처리를 위한 프로세스 수 (기본값: CPU 코어 수, {os.cpu_count()})",
)
@click.option("--no-disturbance", is_flag=True, help="돌풍 끄기")
@click.option("--steps", type=int, default=None, help="시뮬레이션 스텝 수")
def roa_grid(
    config_path: str | None,
    out_dir: str,
    seed: int | None,
    terminal_dir: str | None,
    verbose: bool,
    grid: str | None,
    workers: int,
    no_disturbance: bool,
    steps: int | None,
) -> None:
    """여러 초기 위치/요각에서 RTI 제어기(GN, ℓ=1)로 실행하고 y 궤적을 겹쳐 그립니다."""
    configure_logging(verbose)

    def action() -> None:
        from tdo_mpc.artifacts.plots import plot_roa
        from tdo_mpc.core.simulation import multi_initial_conditions, rti_config

        config = rti_config(
            _load(
                config_path,
                seed=seed,
                steps=steps,
                disturbance_on=False if no_disturbance else None,
            )
        )
        out = Path(out_dir)
        manifest = RunManifest.start("roa-grid", config.to_dict(), config.scenario.seed, out, config_path)
        runs = multi_initial_conditions(
            _setup(config, terminal_dir), config, _parse_grid(grid), workers=max(1, workers)
        )
        rows = []
        for i, run in enumerate(runs):
            if run.log is not None:
                manifest.add_output(write_log(run.log, out / f"roa_{i:02d}.csv", manifest.run_id))
            rows.append(
                {
                    "index": i,
                    "y0": run.y0,
                    "psi0_deg": float(np.degrees(run.psi0)),
                    "final_norm": run.log.final_norm() if run.log else float("nan"),
                    "converged": int(run.converged),
                    "status": "ok" if run.log else "failed",
                }
            )
        manifest.add_output(write_table(rows, out / "roa_summary.csv"))
        manifest.add_output(plot_roa(runs, out / "roa.svg"))
        all_converged = all(r.converged for r in runs)
        manifest.summary = {"runs": len(runs), "all_converged": all_converged}
        manifest.write()
        click.echo(
            f"완료: {len(runs)}개 중 {sum(r.converged for r in runs)}개 수렴"
            + (" (전체 수렴)" if all_converged else "")
        )

    _guarded(action)


def main() -> None:
    cli()


if __name__ == "__main__":  # pragma: no cover
    main()
