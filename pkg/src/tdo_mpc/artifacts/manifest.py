"""
실행 매니페스트 - 출력 파일 묶음을 설명하는 JSON

run_id는 명령, 유효 설정, 시드의 SHA-256 앞 12자리이므로 같은 설정으로
다시 실행하면 같은 식별자가 나옵니다. 모든 CSV 헤더가 이 식별자를 참조합니다.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any


def make_run_id(command: str, config: dict[str, Any], seed: int) -> str:
    payload = json.dumps(
        {"command": command, "config": config, "seed": seed},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def describe_version() -> str:
    """git describe 형식 버전 (저장소 밖이면 패키지 버전)"""
    from tdo_mpc import __version__

    try:
        result = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            cwd=Path(__file__).resolve().parent,
            timeout=5,
        )
    except (OSError, subprocess.TimeoutExpired):
        return __version__
    described = result.stdout.strip()
    return f"{__version__}+{described}" if result.returncode == 0 and described else __version__


@dataclass
class RunManifest:
    """
    실행 하나의 기록

    Attributes:
        command: CLI 하위 명령
        config_path: --config 경로 (없으면 None)
        seed: 돌풍 시드
        version: git describe 형식 버전
        out_dir: 출력 디렉터리
        started_at: 시작 시각 (UTC ISO 8601)
        run_id: 출력 파일 공통 식별자
        config: 플래그까지 반영한 유효 설정
        outputs: 생성된 파일 이름
        timings: 계산 시간 요약 (초)
    """

    command: str
    config_path: str | None
    seed: int
    version: str
    out_dir: str
    started_at: str
    run_id: str
    config: dict[str, Any] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def start(
        cls,
        command: str,
        config: dict[str, Any],
        seed: int,
        out_dir: Path,
        config_path: str | None = None,
    ) -> "RunManifest":
        return cls(
            command=command,
            config_path=config_path,
            seed=seed,
            version=describe_version(),
            out_dir=str(out_dir),
            started_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            run_id=make_run_id(command, config, seed),
            config=config,
        )

    def add_output(self, path: Path) -> None:
        """출력 디렉터리 기준 상대 경로로 기록 (밖이면 파일 이름만)"""
        path = Path(path)
        try:
            self.outputs.append(path.relative_to(self.out_dir).as_posix())
        except ValueError:
            self.outputs.append(path.name)

    def write(self, path: Path | None = None) -> Path:
        path = Path(path) if path else Path(self.out_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(asdict(self), indent=2, ensure_ascii=False, default=str) + "\n",
            encoding="utf-8",
        )
        return path
