"""Subprocess protocols connecting the engine to agent and evaluator backends.

Agent contract: the engine spawns the configured command with the workspace
root as working directory and ``EVE_TASK_MANIFEST`` pointing at ``task.json``
(``EVE_SESSION_KEY`` carries a deterministic per-session key for plugins that
want reproducible randomness). Before exiting the agent writes
``.eve/session.log``, ``.eve/tokens.json`` and touches ``.eve/done``.

Evaluator contract: spawned with the solver directory as its single argument
and a scratch working directory; it writes ``score.json`` with at least
``error_mean`` (optionally ``per_metric``, ``log``, ``tag``). Exit 0 means ok;
the stored solver score is ``-error_mean``.
"""

from __future__ import annotations

import json
import logging
import math
import os
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .model import TokenUsage
from .storage import remove_tree, scratch_base
from .workspace import DONE_FLAG_PATH, SESSION_LOG_PATH, TOKEN_USAGE_PATH, WorkspaceSpec

logger = logging.getLogger(__name__)

ENV_TASK_MANIFEST = "EVE_TASK_MANIFEST"
ENV_SESSION_KEY = "EVE_SESSION_KEY"

SCORE_FILE_NAME = "score.json"
PER_EXAMPLE_METRICS = tuple(f"e_{k}" for k in range(1, 11))


@dataclass
class AgentSessionResult:
    """Outcome of one agent session against a workspace."""

    exit_ok: bool
    session_log: str
    token_usage: TokenUsage
    duration: float
    timed_out: bool = False
    failure_reason: str | None = None


@dataclass
class EvaluationResult:
    """Outcome of scoring one solver candidate."""

    ok: bool
    score: float | None = None
    error_mean: float | None = None
    per_metric: dict[str, float] = field(default_factory=dict)
    log: str = ""
    tag: str | None = None
    failure_reason: str | None = None


class AgentBackend(Protocol):
    def run_session(
        self, spec: WorkspaceSpec, timeout: float | None, session_key: str
    ) -> AgentSessionResult: ...


class EvaluatorBackend(Protocol):
    def evaluate(self, files_dir: Path, timeout: float | None) -> EvaluationResult: ...


def aggregate_mean_error(per_example: Sequence[float]) -> float:
    """Mean of the ten per-example-count errors."""
    if len(per_example) != 10:
        raise ValueError(f"expected exactly 10 per-example errors, got {len(per_example)}")
    for e in per_example:
        if not math.isfinite(e) or e < 0:
            raise ValueError(f"per-example errors must be finite and >= 0, got {e}")
    return math.fsum(per_example) / 10.0


def read_token_usage(path: Path) -> TokenUsage:
    """Parse a tokens file; a missing or malformed file degrades to zeros."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        usage = TokenUsage.from_dict(data)
        if usage.cached_input < 0 or usage.fresh_input < 0 or usage.output < 0:
            raise ValueError("negative token count")
        return usage
    except FileNotFoundError:
        logger.warning("token usage file missing at %s; counting zeros", path)
        return TokenUsage()
    except (ValueError, json.JSONDecodeError, OSError) as exc:
        logger.warning("unreadable token usage at %s (%s); counting zeros", path, exc)
        return TokenUsage()


class CommandAgent:
    """Runs an external agent command against a workspace."""

    def __init__(self, argv: Sequence[str]):
        if not argv:
            raise ValueError("agent command must be nonempty")
        self.argv = list(argv)

    def run_session(
        self, spec: WorkspaceSpec, timeout: float | None, session_key: str
    ) -> AgentSessionResult:
        env = dict(os.environ)
        env[ENV_TASK_MANIFEST] = str(spec.task_manifest.resolve())
        env[ENV_SESSION_KEY] = session_key
        start = time.monotonic()
        timed_out = False
        failure = None
        try:
            proc = subprocess.run(
                self.argv,
                cwd=spec.root,
                env=env,
                capture_output=True,
                text=True,
                timeout=timeout,
            )
            returncode = proc.returncode
            captured = proc.stdout + proc.stderr
        except subprocess.TimeoutExpired as exc:
            timed_out = True
            returncode = -1
            captured = (exc.stdout or "") + (exc.stderr or "")
            if isinstance(captured, bytes):
                captured = captured.decode("utf-8", errors="replace")
            failure = "timeout"
        except OSError as exc:
            returncode = -1
            captured = str(exc)
            failure = f"spawn_failed: {exc}"
        duration = time.monotonic() - start

        done_present = (spec.root / DONE_FLAG_PATH).is_file()
        if failure is None:
            if returncode != 0:
                failure = f"exit_code_{returncode}"
            elif not done_present:
                failure = "done_flag_missing"
        exit_ok = failure is None

        log_path = spec.root / SESSION_LOG_PATH
        if log_path.is_file():
            session_log = log_path.read_text(encoding="utf-8")
        else:
            session_log = captured
        token_usage = (
            read_token_usage(spec.root / TOKEN_USAGE_PATH) if not timed_out else TokenUsage()
        )
        return AgentSessionResult(
            exit_ok=exit_ok,
            session_log=session_log,
            token_usage=token_usage,
            duration=duration,
            timed_out=timed_out,
            failure_reason=failure,
        )


class CommandEvaluator:
    """Runs an external evaluator command against a solver snapshot."""

    def __init__(self, argv: Sequence[str]):
        if not argv:
            raise ValueError("evaluator command must be nonempty")
        self.argv = list(argv)

    def evaluate(self, files_dir: Path, timeout: float | None) -> EvaluationResult:
        scratch = Path(tempfile.mkdtemp(prefix="eve-eval-", dir=scratch_base()))
        try:
            try:
                proc = subprocess.run(
                    [*self.argv, str(Path(files_dir).resolve())],
                    cwd=scratch,
                    capture_output=True,
                    text=True,
                    timeout=timeout,
                )
            except subprocess.TimeoutExpired:
                return EvaluationResult(ok=False, failure_reason="timeout")
            except OSError as exc:
                return EvaluationResult(ok=False, failure_reason=f"spawn_failed: {exc}")
            if proc.returncode != 0:
                return EvaluationResult(
                    ok=False,
                    log=proc.stdout + proc.stderr,
                    failure_reason=f"exit_code_{proc.returncode}",
                )
            score_path = scratch / SCORE_FILE_NAME
            try:
                data = json.loads(score_path.read_text(encoding="utf-8"))
                return parse_score_payload(data)
            except (OSError, ValueError, json.JSONDecodeError) as exc:
                return EvaluationResult(
                    ok=False,
                    log=proc.stdout + proc.stderr,
                    failure_reason=f"bad_score_file: {exc}",
                )
        finally:
            remove_tree(scratch)


def parse_score_payload(data: dict) -> EvaluationResult:
    """Turn a score.json payload into an EvaluationResult (score = -error)."""
    error_mean = float(data["error_mean"])
    if not math.isfinite(error_mean):
        raise ValueError("error_mean must be finite")
    per_metric = {str(k): float(v) for k, v in (data.get("per_metric") or {}).items()}
    if all(name in per_metric for name in PER_EXAMPLE_METRICS):
        recomputed = aggregate_mean_error([per_metric[n] for n in PER_EXAMPLE_METRICS])
        if abs(recomputed - error_mean) > 1e-9:
            logger.warning(
                "per-example metrics aggregate to %r but error_mean is %r",
                recomputed,
                error_mean,
            )
    return EvaluationResult(
        ok=True,
        score=-error_mean,
        error_mean=error_mean,
        per_metric=per_metric,
        log=str(data.get("log", "")),
        tag=data.get("tag"),
    )


def agent_backend_from_spec(spec: dict) -> AgentBackend:
    """Build an agent backend from its config spec."""
    kind = spec.get("kind")
    if kind == "command":
        return CommandAgent(spec["argv"])
    if kind == "mock":
        from .mocks import MockAgent, MockPolicy

        return MockAgent(MockPolicy.from_spec(spec))
    raise ValueError(f"unknown agent backend kind {kind!r}")


def evaluator_backend_from_spec(spec: dict) -> EvaluatorBackend:
    """Build an evaluator backend from its config spec."""
    kind = spec.get("kind")
    if kind == "command":
        return CommandEvaluator(spec["argv"])
    if kind == "synthetic":
        from .mocks import LANDSCAPES, SyntheticEvaluator

        return SyntheticEvaluator(LANDSCAPES[spec["landscape"]])
    raise ValueError(f"unknown evaluator backend kind {kind!r}")
