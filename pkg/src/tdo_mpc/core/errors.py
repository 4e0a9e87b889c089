"""
TDO-MPC 예외 계층

호출 측에서 자연스럽게 잡을 수 있도록 각 예외는 내장 예외
(설정/검증 문제는 ValueError, 수치 실패는 RuntimeError)를 함께 상속합니다.
"""

from __future__ import annotations

from typing import Any


class TdoError(Exception):
    """tdo_mpc 패키지의 모든 예외의 기반 클래스"""


class ConfigError(TdoError, ValueError):
    """설정 파일 또는 파라미터 검증 실패"""


class QpFailure(TdoError, RuntimeError):
    """
    QP 부분문제 풀이 실패

    Attributes:
        status: QP 상태 ("infeasible", "max_iter", "indefinite")
        subproblem: 실패한 QpSubproblem (있으면 덤프용)
    """

    def __init__(self, status: str, message: str | None = None, subproblem: Any = None) -> None:
        self.status = status
        self.subproblem = subproblem
        super().__init__(message or f"QP 풀이 실패: status={status}")


class IterationError(TdoError, RuntimeError):
    """
    T_ℓ 반복 중 QP 실패 (부분 잔차 기록 포함)

    Attributes:
        status: 원인 QP 상태
        trace: 실패 직전까지의 자연 잔차 기록
        subproblem: 실패한 QpSubproblem
    """

    def __init__(
        self, status: str, trace: list[float], message: str, subproblem: Any = None
    ) -> None:
        self.status = status
        self.subproblem = subproblem
        self.trace = list(trace)
        super().__init__(message)


class NoConvergenceError(TdoError, RuntimeError):
    """solve_to_tolerance가 허용 오차에 도달하지 못함"""

    def __init__(self, message: str, trace: list[float] | None = None) -> None:
        self.trace = list(trace or [])
        super().__init__(message)


class NonStabilizableError(TdoError, RuntimeError):
    """Riccati 재귀가 발산함 ((A, B) 안정화 불가능)"""


class HypothesisViolatedError(TdoError, ValueError):
    """η ε^(q−1) ≥ 1 이어서 이득 함수가 정의되지 않음"""


class FitRefusedError(TdoError, RuntimeError):
    """수렴률 회귀에 쓸 유효 표본이 부족함"""


class BranchJumpError(TdoError, RuntimeError):
    """해 분기(branch) 점프가 감지되어 구간 추정을 거부함"""


class DegenerateSegmentError(TdoError, ValueError):
    """파라미터 구간의 길이가 0임"""


class UnboundedSetError(TdoError, ValueError):
    """제약 다면체가 유계가 아님"""


class LicqFailureError(TdoError, RuntimeError):
    """LICQ가 성립하지 않아 SSOSC 검사를 수행할 수 없음"""

    def __init__(self, deficiency: int, details: Any = None) -> None:
        self.deficiency = deficiency
        self.details = details
        super().__init__(f"LICQ 불만족: rank 부족 {deficiency}")
