"""The example evaluator against fabricated solver snapshots."""

from __future__ import annotations

import json
import subprocess
from pathlib import Path

import pytest

from conftest import EVALUATOR


def run_evaluator(scratch: Path, solver_dir: Path) -> subprocess.CompletedProcess:
    scratch.mkdir(parents=True, exist_ok=True)
    return subprocess.run(
        [*EVALUATOR, str(solver_dir)], cwd=scratch, capture_output=True, text=True
    )


def make_solver(tmp_path: Path, payload: str) -> Path:
    solver = tmp_path / "solver_snapshot"
    (solver / "solver").mkdir(parents=True)
    (solver / "solver/params.json").write_text(payload)
    return solver


def test_quadratic_bowl_score(tmp_path):
    solver = make_solver(tmp_path, '{"x": 0.3, "y": 0.4}')
    scratch = tmp_path / "scratch"
    proc = run_evaluator(scratch, solver)
    assert proc.returncode == 0, proc.stderr
    score = json.loads((scratch / "score.json").read_text())
    assert score["error_mean"] == pytest.approx(0.25)
    assert score["tag"] == "QuadraticBowl"
    assert len([k for k in score["per_metric"] if k.startswith("e_")]) == 10
    # the synthesized per-example errors aggregate back to the mean
    mean = sum(score["per_metric"][f"e_{k}"] for k in range(1, 11)) / 10
    assert mean == pytest.approx(score["error_mean"], abs=1e-9)


def test_zero_parameters_score_zero(tmp_path):
    solver = make_solver(tmp_path, '{"x": 0.0}')
    scratch = tmp_path / "scratch"
    assert run_evaluator(scratch, solver).returncode == 0
    assert json.loads((scratch / "score.json").read_text())["error_mean"] == 0.0


def test_malformed_solver_exits_nonzero(tmp_path):
    solver = make_solver(tmp_path, "{broken json")
    proc = run_evaluator(tmp_path / "scratch", solver)
    assert proc.returncode != 0
    assert not (tmp_path / "scratch/score.json").exists()


def test_missing_params_file_exits_nonzero(tmp_path):
    solver = tmp_path / "empty_snapshot"
    solver.mkdir()
    proc = run_evaluator(tmp_path / "scratch", solver)
    assert proc.returncode != 0


def test_byte_identical_for_identical_input(tmp_path):
    solver = make_solver(tmp_path, '{"x": 0.12, "y": -0.05}')
    outputs = []
    for name in ("s1", "s2"):
        scratch = tmp_path / name
        assert run_evaluator(scratch, solver).returncode == 0
        outputs.append((scratch / "score.json").read_bytes())
    assert outputs[0] == outputs[1]
