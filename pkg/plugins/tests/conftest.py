from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

PLUGINS_DIR = Path(__file__).resolve().parent.parent
AGENT = [sys.executable, str(PLUGINS_DIR / "example_agent.py")]
EVALUATOR = [sys.executable, str(PLUGINS_DIR / "example_evaluator.py")]


@pytest.fixture
def fake_workspace(tmp_path: Path) -> Path:
    """A hand-built workspace following the documented task.json schema."""
    root = tmp_path / "ws"
    (root / "solver").mkdir(parents=True)
    (root / ".eve").mkdir()
    (root / ".guidance").mkdir()
    (root / "solver/params.json").write_text('{"x": 0.24, "y": 0.1}\n')
    (root / ".guidance/directions.md").write_text("# directions\n")
    (root / "task.json").write_text(
        json.dumps(
            {
                "allowlist": ["solver/params.json"],
                "prefill_score": 0.0676,
                "references_solvers": [],
                "references_agents": [],
                "guidance_path": ".guidance",
                "output": {
                    "session_log": ".eve/session.log",
                    "token_usage": ".eve/tokens.json",
                    "done_flag": ".eve/done",
                },
            },
            indent=2,
        )
    )
    return root
