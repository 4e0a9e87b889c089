"""
시나리오 워커 - 스윕/ROA 격자용 프로세스 풀 작업

각 시나리오는 하나의 프로세스에서 독립적으로 실행되며 공유 상태가
없습니다. 결과는 완료 순서와 무관하게 task_id 순서로 반환합니다.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass

from loguru import logger

from tdo_mpc.core.config import ExperimentConfig
from tdo_mpc.core.errors import TdoError
from tdo_mpc.core.simulation import BenchmarkSetup, ClosedLoopLog, run_scenario


@dataclass
class ScenarioTask:
    """워커에게 전달되는 작업"""

    task_id: int
    config: ExperimentConfig
    setup: BenchmarkSetup
    label: str = ""


@dataclass
class ScenarioOutcome:
    """워커가 반환하는 결과"""

    task_id: int
    success: bool
    label: str = ""
    log: ClosedLoopLog | None = None
    error: str | None = None


def run_scenario_task(task: ScenarioTask) -> ScenarioOutcome:
    """작업 하나 실행 (실패는 결과에 담아 반환)"""
    try:
        log = run_scenario(task.config, task.setup)
        return ScenarioOutcome(task_id=task.task_id, success=True, label=task.label, log=log)
    except (TdoError, ValueError) as e:
        return ScenarioOutcome(
            task_id=task.task_id,
            success=False,
            label=task.label,
            error=f"{type(e).__name__}: {e}",
        )


def run_tasks(tasks: list[ScenarioTask], workers: int = 1) -> list[ScenarioOutcome]:
    """
    작업 목록 실행

    Args:
        tasks: 작업 목록
        workers: 프로세스 수 (1 이하면 현재 프로세스에서 순차 실행)
    """
    if workers <= 1 or len(tasks) <= 1:
        outcomes = [run_scenario_task(t) for t in tasks]
    else:
        outcomes = []
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(run_scenario_task, t): t for t in tasks}
            for future in as_completed(futures):
                outcomes.append(future.result())
        outcomes.sort(key=lambda o: o.task_id)

    for out in outcomes:
        if not out.success:
            logger.warning("시나리오 실패 | {label} | {err}", label=out.label, err=out.error)
    return outcomes
