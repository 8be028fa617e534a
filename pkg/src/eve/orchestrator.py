"""The evolutionary loop: seed evaluation, synchronous races, persistence.

Each iteration samples working agents and reference material, materializes
one identical workspace per working slot, runs the agent sessions in
parallel, then joins everything back in deterministic slot order: boundary
check, candidate extraction, evaluation, race matrix, Elo updates, and (in
the ``eve`` variant) agent-population expansion. Iterations are committed
atomically by their ``result.json``; all randomness for iteration ``n`` is
drawn from streams derived from ``(rng_seed, n)``, so interrupted runs resume
to byte-identical results.
"""

from __future__ import annotations

import logging
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from random import Random

from . import storage
from .adapters import (
    AgentBackend,
    AgentSessionResult,
    EvaluationResult,
    EvaluatorBackend,
    agent_backend_from_spec,
    evaluator_backend_from_spec,
)
from .errors import SeedEvaluationError, UsageError
from .model import (
    VARIANT_EVE,
    VARIANT_STATIC_FINAL,
    AgentRecord,
    IterationResult,
    RunConfig,
    RunState,
    SlotOutcome,
    SolverRecord,
)
from .accounting import iteration_cost
from .rating import competition, elo_update, race_outcomes
from .selection import (
    sample_reference_agents,
    sample_reference_solvers,
    sample_working_agents,
)
from .storage import RunLock, RunPaths, remove_tree, scratch_base, tree_digest
from .workspace import (
    ReferenceAgentEntry,
    ReferenceSolverEntry,
    WorkspaceSpec,
    boundary_check,
    build_workspace,
    extract_agent_revision,
    extract_solver,
)

logger = logging.getLogger(__name__)

SEED_SOLVER_ID = "0000"
SEED_AGENT_ID = "0000"


@dataclass(frozen=True)
class VariantPolicy:
    """What a run variant permits: only ``eve`` evolves the agent population."""

    expand_agents: bool


def apply_variant(variant: str) -> VariantPolicy:
    return VariantPolicy(expand_agents=variant == VARIANT_EVE)


def iteration_rng(rng_seed: int, iteration: int) -> Random:
    """Sampling stream of one iteration, independent of all others."""
    return Random(f"{rng_seed}:{iteration}")


def session_key(rng_seed: int, iteration: int, slot: int) -> str:
    """Deterministic per-session key handed to agent backends."""
    return f"{rng_seed}:{iteration}:{slot}"


def select_best_agent(state: RunState) -> AgentRecord:
    """Best-rated agent of a completed run; rating ties go to the newest."""
    if not state.agents:
        raise ValueError("agent population is empty")
    return max(state.agents, key=lambda a: (a.rating, a.id))


# ---------------------------------------------------------------------------
# run initialization (seed evaluation = iteration 0)


def initialize_run(
    run_dir: Path,
    config: RunConfig,
    variant: str,
    rng_seed: int,
    base_repo_src: Path,
    seed_solver_src: Path,
    seed_guidance_src: Path | None = None,
    frozen_agent_dir: Path | None = None,
    evaluator: EvaluatorBackend | None = None,
) -> RunState:
    """Create a run directory and perform the seed evaluation.

    For the ``static-final`` variant the seed agent is the supplied frozen
    agent: its guidance tree and accumulated logs travel into the new run.
    A failing seed evaluation aborts before anything is written.
    """
    run_dir = Path(run_dir)
    config.validate()

    if variant == VARIANT_STATIC_FINAL:
        if frozen_agent_dir is None:
            raise UsageError("static-final needs a frozen agent (guidance snapshot)")
        guidance_src = Path(frozen_agent_dir) / "guidance"
        if not guidance_src.is_dir():
            raise UsageError(f"frozen agent has no guidance tree: {guidance_src}")
        logs_dir = Path(frozen_agent_dir) / "logs"
        carried = []
        if logs_dir.is_dir():
            for idx, log in enumerate(sorted(logs_dir.iterdir(), key=lambda p: p.name)):
                carried.append((f"00.{idx}.log", log.read_text(encoding="utf-8")))
    else:
        if seed_guidance_src is None:
            raise UsageError("seed guidance tree is required")
        guidance_src = Path(seed_guidance_src)
        carried = []

    seed_solver_src = Path(seed_solver_src)
    missing = [rel for rel in config.allowlist if not (seed_solver_src / rel).is_file()]
    if missing:
        raise UsageError(f"seed solver does not cover allowlist paths: {missing}")

    evaluator = evaluator or evaluator_backend_from_spec(config.evaluator)
    evaluation = evaluator.evaluate(seed_solver_src, config.session_timeout)
    if not evaluation.ok or evaluation.error_mean is None:
        raise SeedEvaluationError(
            f"seed evaluation failed: {evaluation.failure_reason or 'no score'}"
        )

    run_dir.mkdir(parents=True, exist_ok=False)
    paths = RunPaths(run_dir)
    storage.save_config(run_dir, config, variant, rng_seed)
    storage.copy_tree(Path(base_repo_src), paths.base_repo)

    state = RunState(run_dir, config, variant, rng_seed)

    agent = AgentRecord(id=SEED_AGENT_ID, guidance_ref=paths.agent_dir(SEED_AGENT_ID) / "guidance")
    agent.working_logs = [text for _, text in carried]
    storage.save_agent(run_dir, agent, guidance_src, carried_logs=carried)
    state.add_agent(agent)

    solver = SolverRecord(
        id=SEED_SOLVER_ID,
        files_ref=paths.solver_dir(SEED_SOLVER_ID) / "files",
        eval_log=evaluation.log,
        score=evaluation.score,
        origin_iteration=0,
        producer_agent_id=None,
        valid=True,
        tag=evaluation.tag,
    )
    storage.save_solver(run_dir, solver, seed_solver_src)
    state.add_solver(solver)
    return state


# ---------------------------------------------------------------------------
# the loop


@dataclass
class _WorkspaceInputs:
    """Everything needed to materialize one slot's workspace."""

    root: Path
    base_repo: Path
    allowlist: list[str]
    prefill: tuple[str, Path] | None
    reference_solvers: list[ReferenceSolverEntry]
    reference_agents: list[ReferenceAgentEntry]
    guidance_src: Path
    log_cap: int


@dataclass
class _SlotWork:
    """Raw per-slot results collected from the parallel phase."""

    slot: int
    agent: AgentRecord
    workspace: WorkspaceSpec
    session: AgentSessionResult
    boundary_violations: list[str] | None = None
    staged_files: Path | None = None
    extract_error: str | None = None
    evaluation: EvaluationResult | None = None
    revision_changed: bool = False


class Orchestrator:
    """Drives one run; the single writer of its RunState."""

    def __init__(
        self,
        state: RunState,
        agent_backend: AgentBackend | None = None,
        evaluator_backend: EvaluatorBackend | None = None,
        max_workers: int | None = None,
    ):
        self.state = state
        self.agent_backend = agent_backend or agent_backend_from_spec(state.config.agent)
        self.evaluator_backend = evaluator_backend or evaluator_backend_from_spec(
            state.config.evaluator
        )
        self.max_workers = max_workers or state.config.working_count
        self.policy = apply_variant(state.variant)

    def run(self, until: int | None = None) -> RunState:
        """Run iterations up to ``until`` (default: the configured total).

        Already-committed iterations are skipped, so re-running after an
        interrupt resumes cleanly.
        """
        total = self.state.config.total_iterations
        end = total if until is None else until
        if end > total:
            raise UsageError(f"requested iteration {end} beyond configured total {total}")
        with RunLock(self.state.run_dir):
            start = len(self.state.iterations) + 1
            for n in range(start, end + 1):
                self.run_iteration(n)
        return self.state

    # -- one synchronous race -------------------------------------------

    def run_iteration(self, n: int) -> IterationResult:
        state = self.state
        config = state.config
        if n != len(state.iterations) + 1:
            raise ValueError(f"iteration {n} is not next (have {len(state.iterations)})")
        rng = iteration_rng(state.rng_seed, n)

        sampled = sample_working_agents(state.agents, config.working_count, config.rank_beta, rng)
        slots = [sampled[i % len(sampled)] for i in range(config.working_count)]

        refs_s: list[SolverRecord] = []
        prefill: SolverRecord | None = None
        if config.reference_solver_count > 0:
            refs_s = sample_reference_solvers(
                state.solvers, config.reference_solver_count, config.rank_beta, rng
            )
            prefill = refs_s[0]
        refs_a: list[AgentRecord] = []
        if config.reference_agent_count > 0:
            refs_a = sample_reference_agents(
                state.agents, config.reference_agent_count, config.rank_beta, rng
            )

        solver_entries = [
            ReferenceSolverEntry(
                id=s.id, files_dir=Path(s.files_ref), error=s.error, eval_log=s.eval_log
            )
            for s in refs_s
        ]
        agent_entries = [
            ReferenceAgentEntry(
                id=a.id,
                guidance_dir=Path(a.guidance_ref),
                rating=a.rating,
                working_logs=list(a.working_logs),
            )
            for a in refs_a
        ]
        producer_digests = {
            agent.id: tree_digest(Path(agent.guidance_ref)) for agent in slots
        }

        base_repo = RunPaths(state.run_dir).base_repo
        prefill_src = (prefill.id, Path(prefill.files_ref)) if prefill else None
        works: list[_SlotWork] = []
        cleanup: list[Path] = []
        try:
            roots = []
            for slot in range(len(slots)):
                root = Path(tempfile.mkdtemp(prefix=f"eve-ws-{n:02d}-{slot}-", dir=scratch_base()))
                cleanup.append(root)
                roots.append(root)

            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                futures = [
                    pool.submit(
                        self._slot_pipeline,
                        slot,
                        slots[slot],
                        _WorkspaceInputs(
                            root=roots[slot],
                            base_repo=base_repo,
                            allowlist=config.allowlist,
                            prefill=prefill_src,
                            reference_solvers=solver_entries,
                            reference_agents=agent_entries,
                            guidance_src=Path(slots[slot].guidance_ref),
                            log_cap=config.reference_log_cap,
                        ),
                        session_key(state.rng_seed, n, slot),
                        producer_digests[slots[slot].id],
                    )
                    for slot in range(len(slots))
                ]
                works = [f.result() for f in futures]
            for work in works:
                if work.staged_files is not None:
                    cleanup.append(work.staged_files)

            result = self._integrate(
                n,
                works,
                reference_solver_ids=[s.id for s in refs_s],
                reference_agent_ids=[a.id for a in refs_a],
                prefill_solver_id=prefill.id if prefill else None,
            )
        finally:
            for root in cleanup:
                remove_tree(root)
        return result

    def _slot_pipeline(
        self,
        slot: int,
        agent: AgentRecord,
        inputs: _WorkspaceInputs,
        key: str,
        producer_digest: str,
    ) -> _SlotWork:
        """Workspace build, session, boundary check, extraction, evaluation.

        Runs in a worker thread; touches only this slot's workspace and
        staging directory. All state mutation happens later, in slot order.
        """
        config = self.state.config
        ws = build_workspace(
            root=inputs.root,
            base_repo=inputs.base_repo,
            allowlist=inputs.allowlist,
            prefill=inputs.prefill,
            reference_solvers=inputs.reference_solvers,
            reference_agents=inputs.reference_agents,
            guidance_src=inputs.guidance_src,
            log_cap=inputs.log_cap,
        )
        session = self.agent_backend.run_session(ws, config.session_timeout, key)
        work = _SlotWork(slot=slot, agent=agent, workspace=ws, session=session)
        if not session.exit_ok:
            return work

        report = boundary_check(ws)
        work.boundary_violations = report.violations
        changed, _ = extract_agent_revision(ws, producer_digest)
        work.revision_changed = changed
        if not report.passed:
            return work

        staging = Path(tempfile.mkdtemp(prefix="eve-cand-", dir=scratch_base()))
        try:
            extract_solver(ws, report, staging)
        except FileNotFoundError as exc:
            work.extract_error = str(exc)
            remove_tree(staging)
            return work
        work.staged_files = staging
        work.evaluation = self.evaluator_backend.evaluate(staging, config.session_timeout)
        return work

    def _integrate(
        self,
        n: int,
        works: list[_SlotWork],
        reference_solver_ids: list[str],
        reference_agent_ids: list[str],
        prefill_solver_id: str | None,
    ) -> IterationResult:
        """Join phase: single-writer state mutation in deterministic slot order."""
        state = self.state
        config = state.config
        run_dir = state.run_dir
        paths = RunPaths(run_dir)

        outcomes: list[SlotOutcome] = []
        errors: list[float | None] = []
        for work in works:
            agent = work.agent
            log_ref = storage.append_agent_log(
                run_dir, agent.id, n, work.slot, work.session.session_log
            )
            agent.working_logs.append(work.session.session_log)

            outcome = SlotOutcome(
                slot=work.slot,
                agent_id=agent.id,
                session_log_ref=log_ref,
                token_usage=work.session.token_usage,
            )
            error: float | None = None
            if not work.session.exit_ok:
                outcome.failure = work.session.failure_reason or "session_failed"
            elif work.boundary_violations:
                outcome.failure = "boundary_violation: " + ", ".join(work.boundary_violations)
            elif work.extract_error is not None:
                outcome.failure = f"extraction_failed: {work.extract_error}"
            else:
                evaluation = work.evaluation
                solver_id = state.next_solver_id()
                valid = bool(evaluation and evaluation.ok and evaluation.error_mean is not None)
                record = SolverRecord(
                    id=solver_id,
                    files_ref=paths.solver_dir(solver_id) / "files",
                    eval_log=evaluation.log if evaluation else "",
                    score=evaluation.score if valid else None,
                    origin_iteration=n,
                    producer_agent_id=agent.id,
                    valid=valid,
                    tag=evaluation.tag if evaluation else None,
                )
                storage.save_solver(run_dir, record, work.staged_files)
                state.add_solver(record)
                outcome.new_solver_id = solver_id
                if valid:
                    error = record.error
                else:
                    outcome.failure = (
                        f"evaluation_failed: {evaluation.failure_reason}"
                        if evaluation
                        else "evaluation_failed"
                    )
            outcomes.append(outcome)
            errors.append(error)

        slot_agent_ids = [w.agent.id for w in works]
        win_loss = competition(errors, config.tie_epsilon)
        matches = race_outcomes(slot_agent_ids, errors, config.tie_epsilon)
        participants = sorted(set(slot_agent_ids))
        rating_before = {aid: state.agent(aid).rating for aid in participants}
        rating_after = elo_update(rating_before, matches, config.elo_k)
        for aid, rating in rating_after.items():
            state.agent(aid).rating = rating

        if self.policy.expand_agents:
            for work, outcome in zip(works, outcomes):
                if not (work.session.exit_ok and work.revision_changed):
                    continue
                new_id = state.next_agent_id()
                draft = AgentRecord(
                    id=new_id,
                    guidance_ref=paths.agent_dir(new_id) / "guidance",
                    working_logs=[work.session.session_log],
                    parent_id=work.agent.id,
                    origin_iteration=n,
                )
                storage.save_agent(
                    run_dir,
                    draft,
                    work.workspace.guidance_dir,
                    carried_logs=[
                        (paths.agent_log_name(n, work.slot), work.session.session_log)
                    ],
                )
                state.expand_agents([(draft, True)])
                outcome.new_agent_id = new_id

        for outcome in outcomes:
            if outcome.failure is not None:
                logger.warning(
                    "iteration %d slot %d (agent %s) failed: %s",
                    n, outcome.slot, outcome.agent_id, outcome.failure,
                )

        candidate_errors = [e for e in errors if e is not None]
        best_error = min(candidate_errors) if candidate_errors else None
        best_so_far = state.best_so_far(n)
        prior = state.iterations[-1].cumulative_teq if state.iterations else 0.0
        cost = iteration_cost(
            [o.token_usage for o in outcomes], prior, config.teq_weights
        )

        result = IterationResult(
            iteration=n,
            working=outcomes,
            reference_solver_ids=reference_solver_ids,
            reference_agent_ids=reference_agent_ids,
            prefill_solver_id=prefill_solver_id,
            win_loss=win_loss,
            rating_before=rating_before,
            rating_after=rating_after,
            best_so_far=best_so_far,
            best_error=best_error,
            step_teq=cost.step_teq,
            cumulative_teq=cost.cumulative_teq,
            cache_fraction=cost.cache_fraction,
        )
        state.iterations.append(result)
        storage.save_iteration(run_dir, result)
        logger.info(
            "iteration %d committed: best_error=%s best_so_far=%.6g solvers=%d agents=%d",
            n,
            f"{best_error:.6g}" if best_error is not None else "none",
            best_so_far,
            len(state.solvers),
            len(state.agents),
        )
        return result
