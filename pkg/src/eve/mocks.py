"""In-process mock agents and synthetic evaluation landscapes.

These stand in for real coding-agent sessions and GPU-backed evaluators so
that full runs are reproducible in milliseconds. A solver is a small numeric
parameter file inside the allowlist; the synthetic evaluator scores it with a
closed-form error (the L1 distance of all parameters from zero). The decision
logic of every mock policy and of the synthetic evaluator lives in pure
functions of (params, guidance, rng) so tests can replay sessions without any
file machinery.

The two-phase landscape starts at ``x = y = 0.24`` with a default step of
0.03: the ``x`` direction is exhausted after about eight iterations, after
which only ``y`` moves improve the error. Which direction an agent works on
is carried by its guidance tree (the ``active-axis`` line in directions.md);
the phase-adaptive policy proposes a guidance revision once its direction is
exhausted, so adaptation only takes effect in runs that let the agent
population evolve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Callable, Mapping

from .adapters import AgentSessionResult, EvaluationResult, aggregate_mean_error
from .model import TokenUsage
from .storage import canonical_dumps, read_json
from .workspace import (
    DONE_FLAG_PATH,
    SESSION_LOG_PATH,
    TOKEN_USAGE_PATH,
    WorkspaceSpec,
)

AXIS_MARKER = "active-axis:"

# synthetic sessions report fixed token counts; cached input dominates the
# way long cached conversations dominate real agent sessions
MOCK_TOKEN_USAGE = TokenUsage(cached_input=160_000, fresh_input=10_000, output=2_000)

# per-example-count error profile: in-range counts sit below the mean,
# overflow counts above it; the profile averages to exactly 1
PER_EXAMPLE_PROFILE = (0.6, 0.6, 0.6, 0.6, 0.6, 1.4, 1.4, 1.4, 1.4, 1.4)


# ---------------------------------------------------------------------------
# landscapes


@dataclass(frozen=True)
class SyntheticLandscape:
    """Closed-form task: parameter file location, seed values, error form."""

    name: str
    params_path: str
    seed_params: tuple[tuple[str, float], ...]
    tag: str

    def seed(self) -> dict[str, float]:
        return dict(self.seed_params)

    def error(self, params: Mapping[str, float]) -> float:
        return sum(abs(float(v)) for v in params.values())


BOWL = SyntheticLandscape(
    name="bowl",
    params_path="solver/params.json",
    seed_params=(("x", 0.4848),),
    tag="SingleAxisL1",
)

TWO_PHASE = SyntheticLandscape(
    name="two-phase",
    params_path="solver/params.json",
    seed_params=(("x", 0.24), ("y", 0.24)),
    tag="TwoAxisL1",
)

LANDSCAPES: dict[str, SyntheticLandscape] = {l.name: l for l in (BOWL, TWO_PHASE)}


def evaluate_params(
    landscape: SyntheticLandscape, params: Mapping[str, float]
) -> EvaluationResult:
    """Score one parameter set: per-example errors, their mean, and the log."""
    base = landscape.error(params)
    per_example = [base * w for w in PER_EXAMPLE_PROFILE]
    error_mean = aggregate_mean_error(per_example)
    per_metric = {f"e_{k}": e for k, e in enumerate(per_example, start=1)}
    per_metric["mean_d1_d4"] = sum(per_example[:4]) / 4.0
    log = (
        f"landscape={landscape.name} params={json.dumps(dict(sorted(params.items())))} "
        f"error_mean={error_mean!r}"
    )
    return EvaluationResult(
        ok=True,
        score=-error_mean,
        error_mean=error_mean,
        per_metric=per_metric,
        log=log,
        tag=landscape.tag,
    )


class SyntheticEvaluator:
    """In-process evaluator over a synthetic landscape."""

    def __init__(self, landscape: SyntheticLandscape):
        self.landscape = landscape

    def evaluate(self, files_dir: Path, timeout: float | None = None) -> EvaluationResult:
        params_file = Path(files_dir) / self.landscape.params_path
        try:
            params = json.loads(params_file.read_text(encoding="utf-8"))
            values = {str(k): float(v) for k, v in params.items()}
        except (OSError, ValueError, AttributeError, json.JSONDecodeError) as exc:
            return EvaluationResult(ok=False, failure_reason=f"bad_params: {exc}")
        return evaluate_params(self.landscape, values)


# ---------------------------------------------------------------------------
# guidance trees


def seed_guidance_tree(landscape: SyntheticLandscape, allowlist: list[str]) -> dict[str, str]:
    """Seed guidance for the synthetic task, following the usual layout."""
    axis = sorted(landscape.seed())[0]
    allow_lines = "\n".join(f"- `{rel}`" for rel in allowlist)
    return {
        "problem.md": (
            "The solver is a small parameter file scored by a closed-form "
            "evaluator: the error is the L1 size of the parameter vector, so "
            "pushing parameters toward zero improves the score.\n\n"
            "Watch mean_d1_d4 next to the headline mean: a candidate that "
            "trades the short-context regime for the average is not a "
            "satisfying result.\n"
        ),
        "directions.md": (
            "# Search directions\n\n"
            f"{AXIS_MARKER} {axis}\n\n"
            "Take small steps on the active direction and keep candidates "
            "comparable: one parameter change per session.\n"
        ),
        "mutation_surface.md": (
            "# Editable files\n\nOnly these paths may change:\n\n" + allow_lines + "\n"
        ),
        "literature_notes.md": "# Notes\n",
        "skills/read-eval/SKILL.md": (
            "# Reading evaluations\n\n"
            "Read score.json metrics before editing: compare e_1..e_10 and "
            "mean_d1_d4, distinguish broad improvements from single-count "
            "wins, and separate visible evidence from speculation when "
            "writing future guidance.\n"
        ),
    }


def parse_active_axis(guidance: Mapping[str, str]) -> str | None:
    text = guidance.get("directions.md", "")
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith(AXIS_MARKER):
            return stripped[len(AXIS_MARKER):].strip() or None
    return None


def revise_guidance_axis(guidance: Mapping[str, str], new_axis: str) -> dict[str, str]:
    """New guidance tree with the active axis switched and a note appended."""
    revised = dict(guidance)
    old_axis = parse_active_axis(guidance) or "?"
    lines = []
    for line in revised.get("directions.md", "").splitlines():
        if line.strip().startswith(AXIS_MARKER):
            lines.append(f"{AXIS_MARKER} {new_axis}")
        else:
            lines.append(line)
    lines.append(
        f"- note: retired direction {old_axis} after it stopped improving; "
        f"switching focus to {new_axis}"
    )
    revised["directions.md"] = "\n".join(lines) + "\n"
    return revised


# ---------------------------------------------------------------------------
# policies


POLICY_KINDS = ("improver", "noisy", "phase-adaptive", "adversarial")


@dataclass(frozen=True)
class MockPolicy:
    """Scripted session behavior over the synthetic landscape."""

    kind: str = "improver"
    delta: float = 0.01
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown mock policy {self.kind!r}")

    @classmethod
    def from_spec(cls, spec: Mapping[str, object]) -> "MockPolicy":
        return cls(
            kind=str(spec.get("policy", "improver")),
            delta=float(spec.get("delta", 0.01)),
            sigma=float(spec.get("sigma", 0.0)),
        )


@dataclass
class SessionPlan:
    """Everything one mock session does, as plain data."""

    new_params: dict[str, float]
    guidance_update: dict[str, str] | None
    log_text: str
    token_usage: TokenUsage
    violation: bool = False


def plan_session(
    policy: MockPolicy,
    params: Mapping[str, float],
    guidance: Mapping[str, str],
    rng: Random,
) -> SessionPlan:
    """Pure decision core of a mock session (shared by replay oracles)."""
    axes = sorted(params)
    axis = parse_active_axis(guidance)
    if axis not in params:
        axis = axes[0]

    if policy.kind == "noisy":
        step = policy.delta + rng.uniform(-policy.sigma, policy.sigma)
    elif policy.kind == "phase-adaptive":
        step = policy.delta * rng.uniform(0.8, 1.2)
    else:
        step = policy.delta

    old = float(params[axis])
    new_value = max(0.0, old - step)
    new_params = {k: float(v) for k, v in params.items()}
    new_params[axis] = new_value

    guidance_update = None
    note = ""
    if policy.kind == "phase-adaptive" and old <= 0.0:
        alternatives = [a for a in axes if a != axis and float(params[a]) > 0.0]
        if alternatives:
            guidance_update = revise_guidance_axis(guidance, alternatives[0])
            note = f" revised guidance: {axis} -> {alternatives[0]}"

    log_text = (
        f"policy={policy.kind} axis={axis} step={step!r} "
        f"value {old!r} -> {new_value!r}{note}\n"
    )
    return SessionPlan(
        new_params=new_params,
        guidance_update=guidance_update,
        log_text=log_text,
        token_usage=TokenUsage(
            MOCK_TOKEN_USAGE.cached_input,
            MOCK_TOKEN_USAGE.fresh_input,
            MOCK_TOKEN_USAGE.output,
        ),
        violation=policy.kind == "adversarial",
    )


class MockAgent:
    """File-protocol shell around a scripted policy.

    Behaves like an external agent (edits the allowlist parameter file,
    writes the session log, token counts, and done flag, possibly revises
    guidance) but runs in-process and is deterministic under the session key.
    """

    VIOLATION_PATH = "intruder.txt"

    def __init__(self, policy: MockPolicy):
        self.policy = policy

    def run_session(
        self, spec: WorkspaceSpec, timeout: float | None, session_key: str
    ) -> AgentSessionResult:
        task = read_json(spec.task_manifest)
        params_rel = task["allowlist"][0]
        params = {
            str(k): float(v)
            for k, v in json.loads((spec.root / params_rel).read_text(encoding="utf-8")).items()
        }
        guidance = read_tree(spec.guidance_dir)
        plan = plan_session(self.policy, params, guidance, Random(session_key))

        (spec.root / params_rel).write_text(canonical_dumps(plan.new_params), encoding="utf-8")
        if plan.guidance_update is not None:
            write_tree(spec.guidance_dir, plan.guidance_update)
        if plan.violation:
            (spec.root / self.VIOLATION_PATH).write_text("outside the surface\n", encoding="utf-8")

        (spec.root / SESSION_LOG_PATH).write_text(plan.log_text, encoding="utf-8")
        (spec.root / TOKEN_USAGE_PATH).write_text(
            canonical_dumps(plan.token_usage.to_dict()), encoding="utf-8"
        )
        (spec.root / DONE_FLAG_PATH).write_text("", encoding="utf-8")
        return AgentSessionResult(
            exit_ok=True,
            session_log=plan.log_text,
            token_usage=plan.token_usage,
            duration=0.0,
        )


# ---------------------------------------------------------------------------
# file-tree helpers and presets


def read_tree(root: Path) -> dict[str, str]:
    out = {}
    root = Path(root)
    if not root.is_dir():
        return out
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[path.relative_to(root).as_posix()] = path.read_text(encoding="utf-8")
    return out


def write_tree(root: Path, tree: Mapping[str, str]) -> None:
    root = Path(root)
    for rel, text in tree.items():
        target = root / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")


@dataclass(frozen=True)
class Preset:
    """A self-contained synthetic task: trees plus default configuration."""

    name: str
    landscape: SyntheticLandscape
    agent_spec_factory: Callable[[], dict]

    @property
    def allowlist(self) -> list[str]:
        return [self.landscape.params_path]

    def base_repo_tree(self) -> dict[str, str]:
        return {
            "README.md": (
                f"Synthetic optimization playground ({self.name}).\n\n"
                "The only editable surface is the solver parameter file; the "
                "rest of this tree exists to give the boundary check "
                "something to protect.\n"
            ),
            "docs/notes.md": "Fixed scaffolding. Sessions must not touch this file.\n",
            self.landscape.params_path: canonical_dumps(self.landscape.seed()),
        }

    def seed_solver_tree(self) -> dict[str, str]:
        return {self.landscape.params_path: canonical_dumps(self.landscape.seed())}

    def seed_guidance(self) -> dict[str, str]:
        return seed_guidance_tree(self.landscape, self.allowlist)

    def default_config(self) -> dict:
        return {
            "total_iterations": 15,
            "working_count": 2,
            "reference_solver_count": 8,
            "reference_agent_count": 4,
            "elo_k": 32.0,
            "rank_beta": 0.7,
            "tie_epsilon": 0.0,
            "allowlist": self.allowlist,
            "agent": self.agent_spec_factory(),
            "evaluator": {"kind": "synthetic", "landscape": self.landscape.name},
            "session_timeout": 60.0,
        }


PRESETS: dict[str, Preset] = {
    "bowl": Preset(
        name="bowl",
        landscape=BOWL,
        agent_spec_factory=lambda: {"kind": "mock", "policy": "improver", "delta": 0.01},
    ),
    "two-phase": Preset(
        name="two-phase",
        landscape=TWO_PHASE,
        agent_spec_factory=lambda: {"kind": "mock", "policy": "phase-adaptive", "delta": 0.03},
    ),
}
