"""
폐루프 시뮬레이션 - 플랜트 + 제어기 + 돌풍

k = 0..steps−1에 대해
    d_k ~ N(gust_mean, gust_std)  (돌풍 OFF면 0, 난수는 항상 뽑음)
    u_k = 제어기(x_k)
    x_{k+1} = step(x_k, u_k, d_k)
를 실행하고 모든 값을 ClosedLoopLog에 기록합니다. 시드가 같으면 결과가
비트 단위로 같습니다.

Usage:
    from tdo_mpc.core.simulation import BenchmarkSetup, run_scenario

    setup = BenchmarkSetup.from_config(config)
    log = run_scenario(config, setup)
    log.max_abs_state("psi")
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np
from loguru import logger

from tdo_mpc.core.config import (
    INPUT_NAMES,
    STATE_NAMES,
    ExperimentConfig,
    HessianMode,
    OcpSettings,
    ScenarioConfig,
    VehicleParams,
)
from tdo_mpc.core.controller import (
    ControlStep,
    LqrController,
    OptimalMpcController,
    TdoController,
    clamp_input,
    dare_solve,
    initialize,
    oracle_config,
)
from tdo_mpc.core.errors import ConfigError, NoConvergenceError, TdoError
from tdo_mpc.core.invariant_set import compute_terminal_ingredients
from tdo_mpc.core.models import VehicleModel
from tdo_mpc.core.ocp import OcpInstance, build_instance
from tdo_mpc.core.polytope import Polytope

# 로그 헤더에 기록되는 난수 생성기
RNG_NAME = "numpy.random.PCG64"

# ROA 격자 수렴 판정 (‖x_final‖)
CONVERGENCE_TOL = 0.1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def gust_sequence(scenario: ScenarioConfig) -> np.ndarray:
    """시나리오의 돌풍 풍속 수열 (돌풍 OFF여도 같은 난수를 소모)"""
    rng = make_rng(scenario.seed)
    draws = rng.normal(scenario.gust_mean, scenario.gust_std, size=scenario.steps)
    return draws if scenario.disturbance_on else np.zeros(scenario.steps)


# ========== 벤치마크 구성 ==========


@dataclass(frozen=True, eq=False)
class BenchmarkSetup:
    """
    OCP를 만드는 데 필요한 모든 것 (프로세스 간 전달 가능)

    Attributes:
        vehicle: 차량 파라미터
        ocp: OCP 설정
        qf: 종단 비용 행렬
        terminal_set: 종단 집합 (use_terminal_set이 False면 None)
    """

    vehicle: VehicleParams
    ocp: OcpSettings
    qf: np.ndarray
    terminal_set: Polytope | None = None

    @classmethod
    def from_config(
        cls,
        config: ExperimentConfig,
        qf: np.ndarray | None = None,
        terminal_set: Polytope | None = None,
    ) -> "BenchmarkSetup":
        """
        종단 요소가 주어지지 않으면 계산합니다

        Raises:
            NonStabilizableError: 원점 선형화가 안정화 불가능한 경우
        """
        model = VehicleModel(config.vehicle)
        ocp = config.ocp
        if qf is None or (ocp.use_terminal_set and terminal_set is None):
            if ocp.use_terminal_set:
                terminal = compute_terminal_ingredients(model, ocp)
                qf = terminal.qf if qf is None else qf
                terminal_set = terminal_set or terminal.polytope
            else:
                a_mat, b_mat = model.jacobians(np.zeros(model.n_x), np.zeros(model.n_u))
                qf, _ = dare_solve(a_mat, b_mat, ocp.q_matrix(), ocp.r_matrix())
        return cls(vehicle=config.vehicle, ocp=ocp, qf=np.asarray(qf, dtype=float), terminal_set=terminal_set)

    def model(self) -> VehicleModel:
        return VehicleModel(self.vehicle)

    def build_instance(self) -> OcpInstance:
        return build_instance(self.ocp, self.model(), self.qf, self.terminal_set)


# ========== 로그 ==========


@dataclass
class StepRecord:
    """
    한 샘플링 시점의 기록

    Attributes:
        k: 시점
        x, u: 상태와 인가 입력
        d: 돌풍 풍속 (m/s)
        pi: z_k의 자연 잔차 (LQR은 nan)
        e_norm: 최적 해와의 거리 ‖z_k − z*(x_k)‖ (미계산 시 nan)
        state_margins: [x − x_ub, x_lb − x] (음수면 만족)
        input_margins: [u − u_ub, u_lb − u]
        stage_cost, cumulative_cost: ½(xᵀQx + uᵀRu)와 누적합
        event: 제어기 이벤트 ("" 이면 정상)
        clamped: 입력 클램프 여부
        wall_time: 제어 계산 시간 (CSV에는 기록하지 않음)
    """

    k: int
    x: np.ndarray
    u: np.ndarray
    d: float
    pi: float
    e_norm: float
    state_margins: np.ndarray
    input_margins: np.ndarray
    stage_cost: float
    cumulative_cost: float
    event: str = ""
    clamped: bool = False
    mode: str = ""
    ell: int = 0
    pi_before: float = float("nan")
    pi_after: float = float("nan")
    reg_delta: float = float("nan")
    active_set_size: int = -1
    qp_iterations: int = 0
    wall_time: float = 0.0


@dataclass
class ClosedLoopLog:
    """
    폐루프 기록 (스텝 수 = 기록 수)

    Attributes:
        controller: 제어기 표시 (tdo/optimal/lqr)
        seed: 돌풍 시드
        rng: 난수 생성기 이름
        config: 유효 설정 (헤더 echo용)
        records: 시점별 기록
    """

    controller: str
    seed: int
    rng: str = RNG_NAME
    config: dict[str, Any] = field(default_factory=dict)
    records: list[StepRecord] = field(default_factory=list)
    x_final: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def states(self) -> np.ndarray:
        """(steps+1)×n_x (마지막 행은 최종 상태)"""
        rows = [r.x for r in self.records]
        if self.x_final is not None:
            rows.append(self.x_final)
        return np.asarray(rows)

    @property
    def inputs(self) -> np.ndarray:
        return np.asarray([r.u for r in self.records])

    @property
    def disturbances(self) -> np.ndarray:
        return np.asarray([r.d for r in self.records])

    @property
    def residuals(self) -> np.ndarray:
        return np.asarray([r.pi for r in self.records])

    @property
    def cumulative_cost(self) -> float:
        return self.records[-1].cumulative_cost if self.records else 0.0

    @property
    def clamp_count(self) -> int:
        return sum(r.clamped for r in self.records)

    @property
    def event_count(self) -> int:
        return sum(bool(r.event) for r in self.records)

    @property
    def wall_times(self) -> np.ndarray:
        return np.asarray([r.wall_time for r in self.records])

    def max_abs_state(self, name: str) -> float:
        idx = STATE_NAMES.index(name)
        return float(np.max(np.abs(self.states[:, idx])))

    def final_norm(self) -> float:
        return float(np.linalg.norm(self.states[-1]))

    def summary(self) -> dict[str, Any]:
        pi = self.residuals
        finite = pi[np.isfinite(pi)]
        return {
            "controller": self.controller,
            "seed": self.seed,
            "steps": len(self),
            "max_abs_y": self.max_abs_state("y"),
            "max_abs_psi_deg": float(np.degrees(self.max_abs_state("psi"))),
            "max_pi": float(finite.max()) if finite.size else float("nan"),
            "median_pi": float(np.median(finite)) if finite.size else float("nan"),
            "cumulative_cost": self.cumulative_cost,
            "final_norm": self.final_norm(),
            "clamp_count": self.clamp_count,
            "event_count": self.event_count,
        }


# ========== 제어기 구성 ==========


class Controller(Protocol):
    def control(self, x: Sequence[float]) -> ControlStep: ...


def build_controller(
    scenario: ScenarioConfig,
    instance: OcpInstance,
    x0: Sequence[float],
    dump_dir: str | Path | None = None,
) -> Controller:
    """시나리오 설정으로 제어기 생성 (TDO/최적 MPC는 z_0 초기화 포함)"""
    if scenario.controller == "lqr":
        return LqrController.from_instance(instance)
    z0 = initialize(instance, x0, scenario.init, scenario.sqp)
    if scenario.controller == "optimal":
        return OptimalMpcController(instance, oracle_config(scenario.sqp), z=z0)
    return TdoController(instance, scenario.sqp, z=z0, dump_dir=dump_dir)


def _fallback(instance: OcpInstance, previous: np.ndarray) -> ControlStep:
    u, clamped = clamp_input(previous, instance.u_lb, instance.u_ub)
    return ControlStep(u=u, clamped=clamped, event="no_convergence")


# ========== 시나리오 실행 ==========


def run_scenario(
    config: ExperimentConfig,
    setup: BenchmarkSetup | None = None,
    instance: OcpInstance | None = None,
    dump_dir: str | Path | None = None,
) -> ClosedLoopLog:
    """
    한 시나리오의 폐루프 시뮬레이션

    제어기 오류(TdoError)는 이벤트로 기록하고 직전 입력으로 계속합니다.
    scenario.fatal이 True면 그대로 전파합니다.

    Args:
        config: 실험 설정
        setup: 벤치마크 구성 (None이면 config에서 계산)
        instance: 미리 만든 OCP (setup보다 우선)
        dump_dir: TDO 제어기의 QP 실패 부문제를 남길 디렉터리
    """
    scenario = config.scenario
    scenario.validate()
    if instance is None:
        setup = setup or BenchmarkSetup.from_config(config)
        instance = setup.build_instance()
    plant = VehicleModel(config.vehicle)

    x = np.asarray(scenario.x0, dtype=float)
    gusts = gust_sequence(scenario)
    controller = build_controller(scenario, instance, x, dump_dir)
    oracle = (
        OptimalMpcController(
            instance, oracle_config(scenario.sqp), z=getattr(controller, "z", None)
        )
        if scenario.compute_error and scenario.controller != "lqr"
        else None
    )

    label = scenario.controller
    mode = scenario.sqp.mode.short_name if label == "tdo" else ""
    ell = scenario.sqp.ell if label == "tdo" else 0
    log = ClosedLoopLog(controller=label, seed=scenario.seed, config=config.to_dict())
    logger.info(
        "시뮬레이션 시작 | controller={c} | mode={m} | ell={l} | seed={s} | steps={n}",
        c=label,
        m=mode or "-",
        l=ell,
        s=scenario.seed,
        n=scenario.steps,
    )

    u_prev = np.zeros(instance.n_u)
    total = 0.0
    for k in range(scenario.steps):
        started = time.perf_counter()
        try:
            step = controller.control(x)
        except TdoError as e:
            if scenario.fatal:
                raise
            logger.warning("제어기 오류 | k={k} | {err} | 직전 입력 유지", k=k, err=e)
            step = _fallback(instance, u_prev)
        elapsed = time.perf_counter() - started

        pi = float("nan")
        if step.report is not None:
            pi = step.report.pi_after
        elif step.z is not None:
            pi = instance.natural_residual(step.z, x)
        elif isinstance(controller, (TdoController, OptimalMpcController)):
            pi = instance.natural_residual(controller.z, x)

        e_norm = float("nan")
        if oracle is not None:
            try:
                z_star, _ = oracle.solve(x)
                current = step.z if step.z is not None else controller.z  # type: ignore[attr-defined]
                e_norm = current.distance(z_star)
            except NoConvergenceError as e:
                logger.warning("오차 기준 계산 실패 | k={k} | {err}", k=k, err=e)

        stage = instance.stage_cost(x, step.u)
        total += stage
        report = step.report
        log.records.append(
            StepRecord(
                k=k,
                x=x.copy(),
                u=step.u.copy(),
                d=float(gusts[k]),
                pi=float(pi),
                e_norm=float(e_norm),
                state_margins=instance.state_margins(x),
                input_margins=instance.input_margins(step.u),
                stage_cost=stage,
                cumulative_cost=total,
                event=step.event,
                clamped=step.clamped,
                mode=mode,
                ell=ell,
                pi_before=report.pi_before if report else float("nan"),
                pi_after=report.pi_after if report else float("nan"),
                reg_delta=report.reg_delta if report else float("nan"),
                active_set_size=report.active_set_size if report else -1,
                qp_iterations=sum(r.qp_iterations for r in step.trace.reports)
                if step.trace
                else 0,
                wall_time=elapsed,
            )
        )
        x = plant.step(x, step.u, float(gusts[k]))
        u_prev = step.u
        if not np.all(np.isfinite(x)):
            raise TdoError(f"플랜트 상태가 발산했습니다 (k={k})")

    log.x_final = x
    logger.info(
        "시뮬레이션 완료 | controller={c} | 누적 비용 {cost:.4f} | 최대 |psi| {psi:.3f}° | 클램프 {cl} | 이벤트 {ev}",
        c=label,
        cost=log.cumulative_cost,
        psi=np.degrees(log.max_abs_state("psi")),
        cl=log.clamp_count,
        ev=log.event_count,
    )
    return log


# ========== 스윕 ==========


@dataclass
class SweepCell:
    """스윕의 한 칸 (실패 시 log는 None)"""

    mode: str
    ell: int
    log: ClosedLoopLog | None
    error: str | None = None

    @property
    def success(self) -> bool:
        return self.log is not None

    def summary_row(self) -> dict[str, Any]:
        row: dict[str, Any] = {"mode": self.mode, "ell": self.ell, "status": "ok" if self.success else "failed"}
        if self.log is not None:
            s = self.log.summary()
            row.update(
                max_abs_psi_deg=s["max_abs_psi_deg"],
                max_pi=s["max_pi"],
                median_pi=s["median_pi"],
                cumulative_cost=s["cumulative_cost"],
            )
        else:
            row.update(max_abs_psi_deg=float("nan"), max_pi=float("nan"), median_pi=float("nan"), cumulative_cost=float("nan"))
        return row


def sweep_ell(
    setup: BenchmarkSetup,
    base: ExperimentConfig,
    ells: Sequence[int],
    modes: Sequence[str | HessianMode],
    workers: int = 1,
) -> list[SweepCell]:
    """
    (mode, ℓ) 곱집합 실행 (모든 칸이 같은 시드 → 같은 돌풍 수열)

    개별 실패는 기록하고 계속합니다. 결과 순서는 modes × ells 순서입니다.
    """
    from tdo_mpc.core.worker import ScenarioTask, run_tasks

    if not ells or not modes:
        raise ValueError("ells와 modes는 비어 있을 수 없습니다")

    cells: list[tuple[HessianMode, int]] = [
        (HessianMode.parse(m), int(ell)) for m in modes for ell in ells
    ]
    tasks = [
        ScenarioTask(
            task_id=i,
            config=base.with_scenario(
                controller="tdo", sqp=replace(base.scenario.sqp, mode=mode, ell=ell)
            ),
            setup=setup,
            label=f"{mode.short_name}_l{ell}",
        )
        for i, (mode, ell) in enumerate(cells)
    ]
    outcomes = run_tasks(tasks, workers=workers)
    return [
        SweepCell(mode=mode.short_name, ell=ell, log=out.log, error=out.error)
        for (mode, ell), out in zip(cells, outcomes)
    ]


# ========== 여러 초기 조건 ==========


def rti_config(base: ExperimentConfig) -> ExperimentConfig:
    """GN, ℓ = 1 TDO 제어기 (RTI)로 바꾼 설정"""
    sqp = replace(base.scenario.sqp, mode=HessianMode(), ell=1)
    return base.with_scenario(controller="tdo", sqp=sqp)


def default_roa_grid() -> list[tuple[float, float]]:
    """y0 ∈ {−3.7, …, 0} (5개) × psi0 ∈ {−4°, 0, 4°}: 15개 초기 조건"""
    ys = np.linspace(-3.7, 0.0, 5)
    psis = np.radians([-4.0, 0.0, 4.0])
    return [(float(y), float(p)) for y in ys for p in psis]


@dataclass
class RoaRun:
    """초기 조건 하나의 실행 결과"""

    y0: float
    psi0: float
    log: ClosedLoopLog | None
    error: str | None = None
    tol: float = CONVERGENCE_TOL

    @property
    def converged(self) -> bool:
        return self.log is not None and self.log.final_norm() <= self.tol


def multi_initial_conditions(
    setup: BenchmarkSetup,
    base: ExperimentConfig,
    grid: Sequence[tuple[float, float]] | None = None,
    workers: int = 1,
    tol: float = CONVERGENCE_TOL,
) -> list[RoaRun]:
    """
    격자의 (y0, psi0)마다 RTI 제어기로 한 번씩 실행 (나머지 상태는 0)

    base의 제어기와 SQP 설정은 무시하고 GN, ℓ = 1을 씁니다.

    Raises:
        ConfigError: 격자 점이 상태 경계 밖인 경우
    """
    from tdo_mpc.core.worker import ScenarioTask, run_tasks

    grid = list(grid) if grid is not None else default_roa_grid()
    lb, ub = base.ocp.x_lb, base.ocp.x_ub
    for y0, psi0 in grid:
        if not (lb[0] <= y0 <= ub[0] and lb[1] <= psi0 <= ub[1]):
            raise ConfigError(f"격자 점이 상태 경계 밖입니다: ({y0}, {psi0})")

    rti = rti_config(base)
    tasks = []
    for i, (y0, psi0) in enumerate(grid):
        x0 = (y0, psi0) + (0.0,) * (len(STATE_NAMES) - 2)
        tasks.append(
            ScenarioTask(
                task_id=i,
                config=rti.with_scenario(x0=x0),
                setup=setup,
                label=f"y{y0:+.3f}_psi{np.degrees(psi0):+.1f}",
            )
        )
    outcomes = run_tasks(tasks, workers=workers)
    runs = [
        RoaRun(y0=y0, psi0=psi0, log=out.log, error=out.error, tol=tol)
        for (y0, psi0), out in zip(grid, outcomes)
    ]
    logger.info(
        "ROA 격자 완료 | 실행 {n} | 수렴 {ok}",
        n=len(runs),
        ok=sum(r.converged for r in runs),
    )
    return runs


__all__ = [
    "INPUT_NAMES",
    "RNG_NAME",
    "BenchmarkSetup",
    "ClosedLoopLog",
    "RoaRun",
    "StepRecord",
    "SweepCell",
    "build_controller",
    "default_roa_grid",
    "gust_sequence",
    "make_rng",
    "multi_initial_conditions",
    "run_scenario",
    "sweep_ell",
]
