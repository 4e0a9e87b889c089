"""
출력 파일 테스트 (CSV 로그, 행렬 파일, 매니페스트, SVG)
"""

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tdo_mpc.artifacts.logs import (
    COLUMNS,
    format_log,
    parse_log,
    read_log,
    read_table,
    write_log,
    write_table,
)
from tdo_mpc.artifacts.manifest import RunManifest, make_run_id
from tdo_mpc.artifacts.matrices import (
    dump_subproblem,
    load_matrix,
    load_subproblem,
    load_terminal,
    save_matrix,
    save_terminal,
)
from tdo_mpc.artifacts.plots import plot_comparison, plot_roa, plot_sweep, plot_trajectory
from tdo_mpc.core.config import ExperimentConfig
from tdo_mpc.core.polytope import Polytope
from tdo_mpc.core.qp import QpSubproblem
from tdo_mpc.core.simulation import ClosedLoopLog, RoaRun, StepRecord, SweepCell


def _synthetic_log(steps: int = 12, seed: int = 0, controller: str = "tdo") -> ClosedLoopLog:
    """난수로 채운 로그 (nan, 이벤트, 클램프 포함)"""
    rng = np.random.default_rng(seed)
    log = ClosedLoopLog(controller=controller, seed=seed, config=ExperimentConfig().to_dict())
    total = 0.0
    for k in range(steps):
        stage = float(rng.random())
        total += stage
        log.records.append(
            StepRecord(
                k=k,
                x=rng.normal(size=6),
                u=rng.normal(size=2),
                d=float(rng.normal(15.0, 5.0)),
                pi=float(rng.random()) * 10.0 ** -rng.integers(1, 12),
                e_norm=float("nan") if k % 2 else float(rng.random()),
                state_margins=-rng.random(12),
                input_margins=-rng.random(4),
                stage_cost=stage,
                cumulative_cost=total,
                event="qp_infeasible" if k == 3 else "",
                clamped=k == 5,
                mode="jn_aug",
                ell=2,
                pi_before=float(rng.random()),
                pi_after=float(rng.random()),
                reg_delta=0.0 if k % 3 else 1.0 / 3.0,
                active_set_size=int(rng.integers(0, 20)),
                qp_iterations=int(rng.integers(1, 5)),
            )
        )
    log.x_final = rng.normal(size=6)
    return log


class TestLogCsv:
    """CSV 로그 테스트"""

    def test_round_trip_bit_exact(self, temp_dir):
        log = _synthetic_log()
        path = write_log(log, temp_dir / "log.csv", run_id="abcdef012345")
        header, back = read_log(path)
        assert header["run_id"] == "abcdef012345"
        assert back.controller == "tdo"
        assert back.config == log.config
        assert np.array_equal(back.states, log.states)
        assert np.array_equal(back.inputs, log.inputs)
        e_orig = np.array([r.e_norm for r in log.records])
        e_back = np.array([r.e_norm for r in back.records])
        assert np.array_equal(e_orig, e_back, equal_nan=True)
        assert [r.reg_delta for r in back.records] == [r.reg_delta for r in log.records]
        assert back.records[3].event == "qp_infeasible"
        assert back.records[5].clamped
        assert back.clamp_count == 1
        assert back.event_count == 1

    def test_header_and_columns(self):
        text = format_log(_synthetic_log(steps=2), run_id="r")
        lines = text.splitlines()
        assert lines[0] == "# run_id=r"
        assert lines[1] == "# controller=tdo"
        assert lines[5].split(",") == COLUMNS
        assert lines[-1].startswith("# x_final=")
        json.loads(lines[4].partition("=")[2])

    def test_deterministic_text(self):
        assert format_log(_synthetic_log(), "x") == format_log(_synthetic_log(), "x")

    def test_wrong_columns(self):
        text = format_log(_synthetic_log(steps=1), "r").replace("stage_cost", "cost", 1)
        with pytest.raises(ValueError, match="열 순서"):
            parse_log(text)

    def test_missing_header(self):
        text = "\n".join(
            line for line in format_log(_synthetic_log(steps=1), "r").splitlines() if not line.startswith("# seed")
        )
        with pytest.raises(ValueError, match="seed"):
            parse_log(text)

    def test_table(self, temp_dir):
        rows = [{"ell": 1, "a": 0.5, "status": "ok"}, {"ell": 2, "a": 0.1 + 0.2, "status": "ok"}]
        path = write_table(rows, temp_dir / "t.csv")
        back = read_table(path)
        assert [r["ell"] for r in back] == ["1", "2"]
        assert float(back[1]["a"]) == 0.1 + 0.2


class TestMatrices:
    """행렬 파일 테스트"""

    def test_matrix_round_trip(self, temp_dir):
        mat = np.random.default_rng(0).normal(size=(4, 3)) / 3.0
        back = load_matrix(save_matrix(temp_dir / "m.txt", mat))
        assert np.array_equal(back, mat)

    def test_missing_matrix(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            load_matrix(temp_dir / "none.txt")

    def test_terminal_round_trip(self, temp_dir):
        poly = Polytope.from_box([-1.0 / 3.0, -2.0], [0.7, 2.0])
        qf = np.array([[2.0, 0.1], [0.1, 1.0 / 7.0]])
        paths = save_terminal(temp_dir, qf, poly)
        assert [p.name for p in paths] == ["terminal_A.txt", "terminal_b.txt", "terminal_qf.txt"]
        qf_back, poly_back = load_terminal(temp_dir)
        assert np.array_equal(qf_back, qf)
        assert np.array_equal(poly_back.a_mat, poly.a_mat)
        assert np.array_equal(poly_back.b_vec, poly.b_vec)

    def test_terminal_row_mismatch(self, temp_dir):
        poly = Polytope.from_box([-1.0, -1.0], [1.0, 1.0])
        save_terminal(temp_dir, np.eye(2), poly)
        save_matrix(temp_dir / "terminal_b.txt", np.ones((3, 1)))
        with pytest.raises(ValueError, match="행 수"):
            load_terminal(temp_dir)

    @staticmethod
    def _subproblem(n_eq: int = 1) -> QpSubproblem:
        import scipy.sparse as sp

        return QpSubproblem(
            hess=sp.csr_matrix(np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0 / 3.0]])),
            eq_jac=sp.csr_matrix(np.array([[1.0, 1.0, 0.0]])[:n_eq]),
            eq_rhs=np.array([0.5])[:n_eq],
            ineq_jac=sp.csr_matrix(np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])),
            ineq_rhs=np.array([-0.25, 0.1]),
            grad=np.array([1.0, -1.0, 0.0]),
            reg_delta=1e-6,
        )

    def test_subproblem_dump_text(self, temp_dir):
        """차원 헤더 뒤에 블록별 행렬을 평문으로 쓰고 그대로 읽는다"""
        sub = self._subproblem()
        path = dump_subproblem(temp_dir / "qp.txt", sub)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# qp_subproblem n_var=3 n_eq=1 n_ineq=2 reg_delta=9.9999999999999995e-07"
        assert lines[1] == "# hess 3x3"
        assert "# ineq_jac 2x3" in lines

        back = load_subproblem(path)
        assert np.array_equal(back.hess.toarray(), sub.hess.toarray())
        assert np.array_equal(back.eq_jac.toarray(), sub.eq_jac.toarray())
        assert np.array_equal(back.ineq_jac.toarray(), sub.ineq_jac.toarray())
        assert np.array_equal(back.grad, sub.grad)
        assert np.array_equal(back.eq_rhs, sub.eq_rhs)
        assert np.array_equal(back.ineq_rhs, sub.ineq_rhs)
        assert back.reg_delta == sub.reg_delta

    def test_subproblem_dump_empty_block(self, temp_dir):
        back = load_subproblem(dump_subproblem(temp_dir / "qp.txt", self._subproblem(n_eq=0)))
        assert back.n_eq == 0
        assert back.eq_jac.shape == (0, 3)
        assert back.n_ineq == 2

    def test_subproblem_dump_errors(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            load_subproblem(temp_dir / "none.txt")
        (temp_dir / "bad.txt").write_text("1 2 3\n", encoding="utf-8")
        with pytest.raises(ValueError, match="헤더"):
            load_subproblem(temp_dir / "bad.txt")
        path = dump_subproblem(temp_dir / "cut.txt", self._subproblem())
        path.write_text("\n".join(path.read_text(encoding="utf-8").splitlines()[:3]) + "\n", encoding="utf-8")
        with pytest.raises(ValueError, match="행 수"):
            load_subproblem(path)


class TestManifest:
    """실행 매니페스트 테스트"""

    def test_run_id_deterministic(self):
        config = ExperimentConfig().to_dict()
        first = make_run_id("simulate", config, 0)
        assert first == make_run_id("simulate", config, 0)
        assert len(first) == 12
        int(first, 16)
        assert first != make_run_id("simulate", config, 1)
        assert first != make_run_id("sweep", config, 0)

    def test_write(self, temp_dir):
        manifest = RunManifest.start("simulate", {"a": 1}, 3, temp_dir)
        manifest.add_output(temp_dir / "log.csv")
        manifest.add_output(temp_dir / "qp_dumps" / "qp_001_infeasible.txt")
        path = manifest.write()
        data = json.loads(path.read_text(encoding="utf-8"))
        assert data["run_id"] == make_run_id("simulate", {"a": 1}, 3)
        assert data["outputs"] == ["log.csv", "qp_dumps/qp_001_infeasible.txt"]
        assert data["seed"] == 3
        assert data["version"]


class TestPlots:
    """SVG 그림 테스트"""

    def test_trajectory_is_valid_svg(self, temp_dir):
        path = plot_trajectory(_synthetic_log(), temp_dir / "traj.svg")
        root = ET.parse(path).getroot()
        assert root.tag.endswith("svg")

    def test_deterministic(self, temp_dir):
        a = plot_trajectory(_synthetic_log(), temp_dir / "a.svg").read_bytes()
        b = plot_trajectory(_synthetic_log(), temp_dir / "b.svg").read_bytes()
        assert a == b

    def test_comparison(self, temp_dir):
        logs = {"tdo": _synthetic_log(), "lqr": _synthetic_log(seed=1, controller="lqr")}
        ET.parse(plot_comparison(logs, temp_dir / "cmp.svg"))

    def test_sweep_skips_failed_cells(self, temp_dir):
        cells = [
            SweepCell(mode="gn", ell=1, log=_synthetic_log()),
            SweepCell(mode="jn", ell=1, log=None, error="QpFailure"),
        ]
        ET.parse(plot_sweep(cells, temp_dir / "sweep.svg"))

    def test_roa(self, temp_dir):
        runs = [RoaRun(y0=-1.0, psi0=0.0, log=_synthetic_log()), RoaRun(y0=0.0, psi0=0.0, log=None)]
        ET.parse(plot_roa(runs, temp_dir / "roa.svg"))
