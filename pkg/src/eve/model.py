"""Population records and run-level state.

Two append-only populations are maintained per run: scored solvers (file-tree
snapshots) and rated agents (guidance-tree snapshots with cumulative working
logs). Solver scores are stored as ``score = -error`` so that higher is always
better; reports convert back to mean error for display.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

SEED_RATING = 1500.0

VARIANT_EVE = "eve"
VARIANT_STATIC_INITIAL = "static-initial"
VARIANT_STATIC_FINAL = "static-final"
VARIANTS = (VARIANT_EVE, VARIANT_STATIC_INITIAL, VARIANT_STATIC_FINAL)


@dataclass
class TokenUsage:
    """Token counts for one agent session, split by cost category."""

    cached_input: int = 0
    fresh_input: int = 0
    output: int = 0

    def to_dict(self) -> dict[str, int]:
        return {
            "cached_input": self.cached_input,
            "fresh_input": self.fresh_input,
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TokenUsage":
        return cls(
            cached_input=int(data.get("cached_input", 0)),
            fresh_input=int(data.get("fresh_input", 0)),
            output=int(data.get("output", 0)),
        )


@dataclass
class SolverRecord:
    """A scored solver: immutable file-tree snapshot plus evaluation outcome."""

    id: str
    files_ref: Path
    eval_log: str
    score: float
    origin_iteration: int
    producer_agent_id: str | None = None
    valid: bool = True
    tag: str | None = None

    @property
    def error(self) -> float:
        """Mean error as reported by the evaluator (``-score``)."""
        return -self.score

    def meta_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "origin_iteration": self.origin_iteration,
            "producer_agent_id": self.producer_agent_id,
            "score": self.score,
            "valid": self.valid,
            "tag": self.tag,
        }


@dataclass
class AgentRecord:
    """A rated agent: immutable guidance snapshot plus growing working logs.

    ``rating`` is the current Elo value; ``initial_rating`` is what the record
    was created with (1500 for seeds, the producer's rating for revisions) and
    never changes. Current ratings are reconstructed on load by replaying
    committed iteration results, so the persisted meta file stays immutable.
    """

    id: str
    guidance_ref: Path
    rating: float = SEED_RATING
    working_logs: list[str] = field(default_factory=list)
    parent_id: str | None = None
    origin_iteration: int = 0
    initial_rating: float = SEED_RATING

    def meta_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "parent_id": self.parent_id,
            "origin_iteration": self.origin_iteration,
            "initial_rating": self.initial_rating,
        }


@dataclass
class SlotOutcome:
    """What one working-agent session produced in one iteration."""

    slot: int
    agent_id: str
    new_solver_id: str | None = None
    new_agent_id: str | None = None
    session_log_ref: str | None = None
    token_usage: TokenUsage = field(default_factory=TokenUsage)
    failure: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "slot": self.slot,
            "agent_id": self.agent_id,
            "new_solver_id": self.new_solver_id,
            "new_agent_id": self.new_agent_id,
            "session_log_ref": self.session_log_ref,
            "token_usage": self.token_usage.to_dict(),
            "failure": self.failure,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SlotOutcome":
        return cls(
            slot=int(data["slot"]),
            agent_id=data["agent_id"],
            new_solver_id=data.get("new_solver_id"),
            new_agent_id=data.get("new_agent_id"),
            session_log_ref=data.get("session_log_ref"),
            token_usage=TokenUsage.from_dict(data.get("token_usage", {})),
            failure=data.get("failure"),
        )


@dataclass
class IterationResult:
    """One synchronous race: sampled sets, per-slot outcomes, rating movement."""

    iteration: int
    working: list[SlotOutcome]
    reference_solver_ids: list[str]
    reference_agent_ids: list[str]
    prefill_solver_id: str | None
    win_loss: list[list[float | None]]
    rating_before: dict[str, float]
    rating_after: dict[str, float]
    best_so_far: float
    best_error: float | None
    step_teq: float
    cumulative_teq: float
    cache_fraction: float

    @property
    def working_agent_ids(self) -> list[str]:
        return [o.agent_id for o in self.working]

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "working": [o.to_dict() for o in self.working],
            "reference_solver_ids": self.reference_solver_ids,
            "reference_agent_ids": self.reference_agent_ids,
            "prefill_solver_id": self.prefill_solver_id,
            "win_loss": self.win_loss,
            "rating_before": self.rating_before,
            "rating_after": self.rating_after,
            "best_so_far": self.best_so_far,
            "best_error": self.best_error,
            "cost": {
                "step_teq": self.step_teq,
                "cumulative_teq": self.cumulative_teq,
                "cache_fraction": self.cache_fraction,
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "IterationResult":
        cost = data.get("cost", {})
        return cls(
            iteration=int(data["iteration"]),
            working=[SlotOutcome.from_dict(o) for o in data["working"]],
            reference_solver_ids=list(data["reference_solver_ids"]),
            reference_agent_ids=list(data["reference_agent_ids"]),
            prefill_solver_id=data.get("prefill_solver_id"),
            win_loss=data["win_loss"],
            rating_before=dict(data["rating_before"]),
            rating_after=dict(data["rating_after"]),
            best_so_far=float(data["best_so_far"]),
            best_error=data.get("best_error"),
            step_teq=float(cost.get("step_teq", 0.0)),
            cumulative_teq=float(cost.get("cumulative_teq", 0.0)),
            cache_fraction=float(cost.get("cache_fraction", 0.0)),
        )


@dataclass
class RunConfig:
    """Static configuration of one run (everything except variant and seed)."""

    total_iterations: int = 15
    working_count: int = 2
    reference_solver_count: int = 8
    reference_agent_count: int = 4
    elo_k: float = 32.0
    rank_beta: float = 0.7
    tie_epsilon: float = 0.0
    allowlist: list[str] = field(default_factory=list)
    agent: dict[str, Any] = field(default_factory=dict)
    evaluator: dict[str, Any] = field(default_factory=dict)
    session_timeout: float = 60.0
    reference_log_cap: int = 16384
    teq_weights: tuple[float, float, float] = (1.0, 2.0, 12.0)

    def validate(self) -> None:
        if self.total_iterations < 0:
            raise ValueError("total_iterations must be >= 0")
        if self.working_count < 1:
            raise ValueError("working_count must be >= 1")
        if self.reference_solver_count < 0 or self.reference_agent_count < 0:
            raise ValueError("reference counts must be >= 0")
        if self.rank_beta < 0:
            raise ValueError("rank_beta must be >= 0")
        if self.tie_epsilon < 0:
            raise ValueError("tie_epsilon must be >= 0")
        if not self.allowlist:
            raise ValueError("allowlist must be nonempty")
        if not self.agent or not self.evaluator:
            raise ValueError("agent and evaluator backend specs are required")

    def to_dict(self) -> dict[str, Any]:
        return {
            "total_iterations": self.total_iterations,
            "working_count": self.working_count,
            "reference_solver_count": self.reference_solver_count,
            "reference_agent_count": self.reference_agent_count,
            "elo_k": self.elo_k,
            "rank_beta": self.rank_beta,
            "tie_epsilon": self.tie_epsilon,
            "allowlist": list(self.allowlist),
            "agent": self.agent,
            "evaluator": self.evaluator,
            "session_timeout": self.session_timeout,
            "reference_log_cap": self.reference_log_cap,
            "teq_weights": list(self.teq_weights),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {
            "total_iterations", "working_count", "reference_solver_count",
            "reference_agent_count", "elo_k", "rank_beta", "tie_epsilon",
            "allowlist", "agent", "evaluator", "session_timeout",
            "reference_log_cap", "teq_weights",
        }
        kwargs = {k: v for k, v in data.items() if k in known}
        if "teq_weights" in kwargs:
            kwargs["teq_weights"] = tuple(float(w) for w in kwargs["teq_weights"])
        return cls(**kwargs)


class RunState:
    """In-memory view of one run: config plus both populations plus history.

    The orchestrator is the single writer; records are immutable once added
    (agent ratings and working logs are the only evolving fields, and logs
    only ever grow).
    """

    def __init__(
        self,
        run_dir: Path,
        config: RunConfig,
        variant: str,
        rng_seed: int,
    ):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.run_dir = Path(run_dir)
        self.config = config
        self.variant = variant
        self.rng_seed = rng_seed
        self.solvers: list[SolverRecord] = []
        self.agents: list[AgentRecord] = []
        self.iterations: list[IterationResult] = []
        self._solver_index: dict[str, SolverRecord] = {}
        self._agent_index: dict[str, AgentRecord] = {}

    # -- lookups ---------------------------------------------------------

    def solver(self, solver_id: str) -> SolverRecord:
        return self._solver_index[solver_id]

    def agent(self, agent_id: str) -> AgentRecord:
        return self._agent_index[agent_id]

    def valid_solvers(self) -> list[SolverRecord]:
        return [s for s in self.solvers if s.valid]

    def next_solver_id(self) -> str:
        return f"{len(self.solvers):04d}"

    def next_agent_id(self) -> str:
        return f"{len(self.agents):04d}"

    # -- population mutation (append-only) --------------------------------

    def add_solver(self, record: SolverRecord) -> SolverRecord:
        if record.id in self._solver_index:
            raise ValueError(f"duplicate solver id {record.id!r}")
        self.solvers.append(record)
        self._solver_index[record.id] = record
        return record

    def add_agent(self, record: AgentRecord) -> AgentRecord:
        if record.id in self._agent_index:
            raise ValueError(f"duplicate agent id {record.id!r}")
        self.agents.append(record)
        self._agent_index[record.id] = record
        return record

    def expand_agents(
        self, produced: Iterable[tuple[AgentRecord, bool]]
    ) -> list[AgentRecord]:
        """Add revised agents to the population.

        Only entries with ``changed`` set are added; each inherits its
        producer's current rating. Unchanged entries are a no-op.
        """
        added = []
        for draft, changed in produced:
            if not changed:
                continue
            if draft.parent_id is None:
                raise ValueError("revised agent must name its producer")
            producer = self.agent(draft.parent_id)
            draft.rating = producer.rating
            draft.initial_rating = producer.rating
            added.append(self.add_agent(draft))
        return added

    # -- derived quantities ------------------------------------------------

    def best_so_far(self, through_iteration: int) -> float:
        """Running minimum of mean error over valid solvers up to an iteration."""
        errors = [
            s.error
            for s in self.solvers
            if s.valid and s.origin_iteration <= through_iteration
        ]
        if not errors:
            raise ValueError("no valid solver evaluated yet")
        return min(errors)
