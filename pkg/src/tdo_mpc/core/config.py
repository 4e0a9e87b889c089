"""
실험 설정 - JSON 설정 파일과 설정 데이터 클래스

하나의 JSON 파일에 선택적 섹션 `vehicle`, `ocp`, `scenario`, `sqp`를 둡니다.
모든 키는 데이터 클래스 필드 이름과 일치해야 하며, 알 수 없는 키는
ConfigError로 거부됩니다. 누락된 키는 차선 변경 벤치마크 기본값을 사용합니다.
각도는 모두 라디안입니다.

Usage:
    from tdo_mpc.core.config import load_config

    config = load_config("experiment.json")
    config.scenario.sqp.ell  # 1
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Literal, Mapping, get_args

import numpy as np

from tdo_mpc.core.errors import ConfigError

HessianKind = Literal["gauss_newton", "josephy_newton", "jn_augmented"]
ControllerKind = Literal["tdo", "optimal", "lqr"]
InitStrategy = Literal["cold", "presolve"]

HESSIAN_ALIASES: dict[str, HessianKind] = {
    "gn": "gauss_newton",
    "gauss_newton": "gauss_newton",
    "jn": "josephy_newton",
    "josephy_newton": "josephy_newton",
    "jn_aug": "jn_augmented",
    "jn_augmented": "jn_augmented",
}

STATE_NAMES: tuple[str, ...] = ("y", "psi", "nu", "omega", "delta_f", "delta_r")
INPUT_NAMES: tuple[str, ...] = ("ddelta_f", "ddelta_r")


def _deg(value: float) -> float:
    return math.radians(value)


def from_mapping(cls: type, data: Mapping[str, Any], section: str) -> Any:
    """매핑을 데이터 클래스로 변환 (알 수 없는 키는 ConfigError)

    리스트 값은 튜플로 바꿔 frozen 데이터 클래스의 해시 가능성을 유지합니다.
    """
    if not isinstance(data, Mapping):
        raise ConfigError(f"[{section}] 섹션은 객체여야 합니다: {type(data).__name__}")

    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"[{section}] 알 수 없는 설정 키: {', '.join(unknown)}")

    kwargs: dict[str, Any] = {}
    for key, val in data.items():
        if isinstance(val, list):
            val = tuple(tuple(v) if isinstance(v, list) else v for v in val)
        kwargs[key] = val
    try:
        obj = cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"[{section}] 설정 형식 오류: {e}") from e
    obj.validate()
    return obj


def _as_tuple(values: Any, length: int, name: str) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in values)
    except TypeError as e:
        raise ConfigError(f"{name}: 숫자 목록이어야 합니다") from e
    if len(out) != length:
        raise ConfigError(f"{name}: 길이 {length}가 필요합니다 (입력 {len(out)})")
    return out


def _weight_matrix(values: Any, size: int, name: str) -> np.ndarray:
    """대각 목록 또는 size×size 중첩 목록을 가중치 행렬로 변환"""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != size:
            raise ConfigError(f"{name}: 대각 원소 {size}개가 필요합니다")
        return np.diag(arr)
    if arr.shape != (size, size):
        raise ConfigError(f"{name}: {size}×{size} 행렬이 필요합니다 (입력 {arr.shape})")
    return arr


# ========== 차량 ==========


@dataclass(frozen=True)
class VehicleParams:
    """
    자전거 모델 파라미터 (SI 단위)

    Attributes:
        m: 질량 (kg)
        izz: 요 관성 모멘트 (kg·m²)
        lf, lr: 무게중심에서 앞/뒤 차축까지 거리 (m)
        mu: 마찰 계수
        b_tire, c_tire: Pacejka 타이어 파라미터
        area: 측면 면적 (m²)
        rho: 공기 밀도 (kg/m³)
        cd: 측면 항력 계수
        s_long: 종방향 속도 (m/s, 상수)
        ts: 샘플링 주기 (s)
    """

    m: float = 2041.0
    izz: float = 4964.0
    lf: float = 1.56
    lr: float = 1.64
    mu: float = 0.8
    b_tire: float = 12.0
    c_tire: float = 1.285
    area: float = 7.8
    rho: float = 1.225
    cd: float = 1.5
    s_long: float = 30.0
    ts: float = 0.04

    def validate(self) -> None:
        for f in fields(self):
            val = getattr(self, f.name)
            if not isinstance(val, (int, float)) or not math.isfinite(val) or val <= 0:
                raise ConfigError(f"[vehicle] {f.name}는 양수여야 합니다: {val!r}")
        if self.mu > 1.0:
            raise ConfigError(f"[vehicle] mu는 (0, 1] 범위여야 합니다: {self.mu}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "VehicleParams":
        return from_mapping(cls, data, "vehicle")


# ========== OCP ==========


@dataclass(frozen=True)
class OcpSettings:
    """
    최적 제어 문제 설정

    가중치는 대각 목록 또는 전체 행렬로 줄 수 있습니다.
    `soft_indices`에 속한 상태 제약은 슬랙 변수와 L1 벌점으로 완화됩니다.
    """

    horizon: int = 30
    q_weight: tuple = (1.0,) * 6
    r_weight: tuple = (1.0, 1.0)
    x_ub: tuple[float, ...] = (0.4, _deg(7.0), 100.0, 100.0, _deg(35.0), _deg(4.0))
    x_lb: tuple[float, ...] = (-4.7, -_deg(7.0), -100.0, -100.0, -_deg(35.0), -_deg(4.0))
    u_ub: tuple[float, ...] = (1.2, 0.6)
    u_lb: tuple[float, ...] = (-1.2, -0.6)
    soft_indices: tuple[int, ...] = (0, 1, 2, 3)
    penalty_rho: float = 1e3
    use_terminal_set: bool = True

    @property
    def n_x(self) -> int:
        return len(self.x_ub)

    @property
    def n_u(self) -> int:
        return len(self.u_ub)

    def q_matrix(self) -> np.ndarray:
        return _weight_matrix(self.q_weight, self.n_x, "q_weight")

    def r_matrix(self) -> np.ndarray:
        return _weight_matrix(self.r_weight, self.n_u, "r_weight")

    def validate(self) -> None:
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise ConfigError(f"[ocp] horizon은 1 이상의 정수여야 합니다: {self.horizon!r}")
        n_x, n_u = self.n_x, self.n_u
        x_lb = np.array(_as_tuple(self.x_lb, n_x, "x_lb"))
        x_ub = np.array(_as_tuple(self.x_ub, n_x, "x_ub"))
        u_lb = np.array(_as_tuple(self.u_lb, n_u, "u_lb"))
        u_ub = np.array(_as_tuple(self.u_ub, n_u, "u_ub"))
        if np.any(x_lb >= x_ub) or np.any(u_lb >= u_ub):
            raise ConfigError("[ocp] 모든 경계는 lb < ub를 만족해야 합니다")
        if np.any(x_lb >= 0) or np.any(x_ub <= 0) or np.any(u_lb >= 0) or np.any(u_ub <= 0):
            raise ConfigError("[ocp] 원점은 상태/입력 경계의 내부에 있어야 합니다")

        q = self.q_matrix()
        r = self.r_matrix()
        if not np.allclose(q, q.T) or np.linalg.eigvalsh(q).min() < -1e-12:
            raise ConfigError("[ocp] q_weight는 대칭 양반정치여야 합니다")
        if not np.allclose(r, r.T) or np.linalg.eigvalsh(r).min() <= 0:
            raise ConfigError("[ocp] r_weight는 대칭 양정치여야 합니다")

        soft = tuple(self.soft_indices)
        if len(set(soft)) != len(soft) or any(
            not isinstance(i, int) or i < 0 or i >= n_x for i in soft
        ):
            raise ConfigError(f"[ocp] soft_indices가 잘못되었습니다: {soft}")
        if not self.penalty_rho > 0:
            raise ConfigError(f"[ocp] penalty_rho는 양수여야 합니다: {self.penalty_rho}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "OcpSettings":
        return from_mapping(cls, data, "ocp")


# ========== SQP ==========


@dataclass(frozen=True)
class HessianMode:
    """
    Hessian 근사 방식

    Attributes:
        kind: gauss_newton | josephy_newton | jn_augmented
        rho_aug: 증강 라그랑지안 가중치 (jn_augmented에서 양수)
        fd_step: 2차 도함수 중심 차분 간격
    """

    kind: HessianKind = "gauss_newton"
    rho_aug: float = 0.0
    fd_step: float = 1e-5

    @property
    def short_name(self) -> str:
        return {"gauss_newton": "gn", "josephy_newton": "jn", "jn_augmented": "jn_aug"}[
            self.kind
        ]

    @property
    def uses_multipliers(self) -> bool:
        """Hessian이 현재 승수에 의존하는지 (GN은 의존하지 않음)"""
        return self.kind != "gauss_newton"

    def validate(self) -> None:
        if self.kind not in get_args(HessianKind):
            raise ConfigError(f"[sqp] 알 수 없는 Hessian 종류: {self.kind!r}")
        if self.rho_aug < 0:
            raise ConfigError(f"[sqp] rho_aug는 0 이상이어야 합니다: {self.rho_aug}")
        if self.kind == "jn_augmented" and self.rho_aug <= 0:
            raise ConfigError("[sqp] jn_augmented는 양수 rho_aug가 필요합니다")
        if not self.fd_step > 0:
            raise ConfigError(f"[sqp] fd_step은 양수여야 합니다: {self.fd_step}")

    @classmethod
    def parse(cls, value: "str | Mapping[str, Any] | HessianMode") -> "HessianMode":
        """'gn', 'jn', 'jn_aug' 약칭이나 매핑에서 HessianMode 생성"""
        if isinstance(value, HessianMode):
            return value
        if isinstance(value, str):
            kind = HESSIAN_ALIASES.get(value.strip().lower())
            if kind is None:
                raise ConfigError(f"[sqp] 알 수 없는 Hessian 모드: {value!r}")
            mode = cls(kind=kind, rho_aug=1.0 if kind == "jn_augmented" else 0.0)
            mode.validate()
            return mode
        data = dict(value)
        if "kind" in data:
            data["kind"] = HESSIAN_ALIASES.get(str(data["kind"]).lower(), data["kind"])
        return from_mapping(cls, data, "sqp.mode")


@dataclass(frozen=True)
class SqpConfig:
    """
    시간 분산 SQP 설정

    Attributes:
        mode: Hessian 근사 방식
        ell: 샘플링 시점당 SQP 반복 수 (1 이상)
        reg_delta_floor: δI 정규화 하한
        kkt_tol: 완전 수렴 모드의 자연 잔차 허용치
        max_iter: 완전 수렴 모드 반복 상한
    """

    mode: HessianMode = field(default_factory=HessianMode)
    ell: int = 1
    reg_delta_floor: float = 0.0
    kkt_tol: float = 1e-8
    max_iter: int = 200

    def validate(self) -> None:
        self.mode.validate()
        if not isinstance(self.ell, int) or self.ell < 1:
            raise ConfigError(f"[sqp] ell은 1 이상의 정수여야 합니다: {self.ell!r}")
        if self.reg_delta_floor < 0:
            raise ConfigError(f"[sqp] reg_delta_floor는 0 이상이어야 합니다: {self.reg_delta_floor}")
        if not self.kkt_tol > 0:
            raise ConfigError(f"[sqp] kkt_tol은 양수여야 합니다: {self.kkt_tol}")
        if not isinstance(self.max_iter, int) or self.max_iter < 1:
            raise ConfigError(f"[sqp] max_iter는 1 이상의 정수여야 합니다: {self.max_iter!r}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SqpConfig":
        data = dict(data)
        if "mode" in data:
            data["mode"] = HessianMode.parse(data["mode"])
        return from_mapping(cls, data, "sqp")


# ========== 시나리오 ==========


@dataclass(frozen=True)
class ScenarioConfig:
    """
    폐루프 시뮬레이션 시나리오

    Attributes:
        x0: 초기 상태 [y, psi, nu, omega, delta_f, delta_r]
        steps: 시뮬레이션 스텝 수
        seed: 돌풍 난수 시드
        gust_mean, gust_std: 돌풍 풍속 평균/표준편차 (m/s)
        disturbance_on: 돌풍 사용 여부
        controller: tdo | optimal | lqr
        sqp: TDO 제어기 설정
        init: 최적화기 초기화 방식 (cold | presolve)
        compute_error: 최적 해 대비 오차 ‖e_k‖ 기록 여부
        fatal: 제어기 오류 시 시뮬레이션 중단 여부
    """

    x0: tuple[float, ...] = (-3.7, 0.0, 0.0, 0.0, 0.0, 0.0)
    steps: int = 250
    seed: int = 0
    gust_mean: float = 15.0
    gust_std: float = 5.0
    disturbance_on: bool = True
    controller: ControllerKind = "tdo"
    sqp: SqpConfig = field(default_factory=SqpConfig)
    init: InitStrategy = "presolve"
    compute_error: bool = False
    fatal: bool = False

    def validate(self) -> None:
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ConfigError(f"[scenario] steps는 1 이상의 정수여야 합니다: {self.steps!r}")
        if self.gust_std < 0:
            raise ConfigError(f"[scenario] gust_std는 0 이상이어야 합니다: {self.gust_std}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"[scenario] seed는 64비트 음이 아닌 정수여야 합니다: {self.seed!r}")
        if self.controller not in get_args(ControllerKind):
            raise ConfigError(f"[scenario] 알 수 없는 제어기: {self.controller!r}")
        if self.init not in get_args(InitStrategy):
            raise ConfigError(f"[scenario] 알 수 없는 초기화 방식: {self.init!r}")
        if not all(math.isfinite(float(v)) for v in self.x0):
            raise ConfigError(f"[scenario] x0에 유한하지 않은 값이 있습니다: {self.x0}")
        self.sqp.validate()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        data = dict(data)
        if "sqp" in data:
            data["sqp"] = SqpConfig.from_dict(data["sqp"])
        return from_mapping(cls, data, "scenario")


# ========== 전체 설정 ==========


@dataclass(frozen=True)
class ExperimentConfig:
    """설정 파일 하나에 대응하는 전체 실험 설정"""

    vehicle: VehicleParams = field(default_factory=VehicleParams)
    ocp: OcpSettings = field(default_factory=OcpSettings)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def to_dict(self) -> dict[str, Any]:
        """매니페스트/로그 헤더용 평탄하지 않은 사전"""
        return _jsonable(asdict(self))

    def with_scenario(self, **changes: Any) -> "ExperimentConfig":
        scenario = replace(self.scenario, **changes)
        scenario.validate()
        return replace(self, scenario=scenario)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("설정 파일의 최상위는 객체여야 합니다")
        unknown = sorted(set(data) - {"vehicle", "ocp", "scenario", "sqp"})
        if unknown:
            raise ConfigError(f"알 수 없는 설정 섹션: {', '.join(unknown)}")

        scenario_data = dict(data.get("scenario", {}))
        if "sqp" in data:
            if "sqp" in scenario_data:
                raise ConfigError("sqp 설정이 최상위와 scenario에 중복되었습니다")
            scenario_data["sqp"] = data["sqp"]

        return cls(
            vehicle=VehicleParams.from_dict(data.get("vehicle", {})),
            ocp=OcpSettings.from_dict(data.get("ocp", {})),
            scenario=ScenarioConfig.from_dict(scenario_data),
        )


def _jsonable(value: Any) -> Any:
    if is_dataclass(value) and not isinstance(value, type):
        value = asdict(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def load_config(path: "str | Path | None") -> ExperimentConfig:
    """
    JSON 설정 파일 로드

    Args:
        path: 설정 파일 경로. None이면 기본 설정

    Raises:
        FileNotFoundError: 파일이 없는 경우
        ConfigError: JSON 형식 오류 또는 잘못된 값
    """
    if path is None:
        return ExperimentConfig()

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"설정 파일을 찾을 수 없습니다: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"설정 파일 JSON 형식 오류: {path} ({e})") from e
    return ExperimentConfig.from_dict(data)
