"""Shared test utilities: synthetic run setup and run-directory fingerprints."""

from __future__ import annotations

import hashlib
from pathlib import Path

from eve.mocks import PRESETS, write_tree
from eve.model import RunConfig, RunState
from eve.orchestrator import Orchestrator, initialize_run
from eve.storage import canonical_dumps, load_state, tree_digest


def init_synthetic_run(
    run_dir: Path,
    preset_name: str = "two-phase",
    variant: str = "eve",
    rng_seed: int = 0,
    config_overrides: dict | None = None,
    frozen_agent_dir: Path | None = None,
) -> RunState:
    """Materialize preset trees next to the run dir and perform iteration 0."""
    preset = PRESETS[preset_name]
    src = Path(run_dir).parent / (Path(run_dir).name + "-src")
    base_repo = src / "base_repo"
    seed_solver = src / "seed_solver"
    seed_guidance = src / "seed_guidance"
    if not src.exists():
        write_tree(base_repo, preset.base_repo_tree())
        write_tree(seed_solver, preset.seed_solver_tree())
        write_tree(seed_guidance, preset.seed_guidance())
    config_data = preset.default_config()
    config_data.update(config_overrides or {})
    config = RunConfig.from_dict(config_data)
    return initialize_run(
        run_dir,
        config,
        variant,
        rng_seed,
        base_repo_src=base_repo,
        seed_solver_src=seed_solver,
        seed_guidance_src=seed_guidance,
        frozen_agent_dir=frozen_agent_dir,
    )


def run_synthetic(
    run_dir: Path,
    preset_name: str = "two-phase",
    variant: str = "eve",
    rng_seed: int = 0,
    config_overrides: dict | None = None,
    frozen_agent_dir: Path | None = None,
    until: int | None = None,
    max_workers: int | None = None,
) -> RunState:
    state = init_synthetic_run(
        run_dir, preset_name, variant, rng_seed, config_overrides, frozen_agent_dir
    )
    Orchestrator(state, max_workers=max_workers).run(until=until)
    return state


def text_sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def state_fingerprint(state: RunState) -> str:
    """Canonical byte serialization of populations, ratings, and history."""
    data = {
        "solvers": [
            {
                "id": s.id,
                "origin_iteration": s.origin_iteration,
                "producer_agent_id": s.producer_agent_id,
                "score": s.score,
                "valid": s.valid,
                "tag": s.tag,
                "files": tree_digest(Path(s.files_ref)),
                "eval_log": text_sha(s.eval_log),
            }
            for s in state.solvers
        ],
        "agents": [
            {
                "id": a.id,
                "parent_id": a.parent_id,
                "origin_iteration": a.origin_iteration,
                "rating": a.rating,
                "initial_rating": a.initial_rating,
                "guidance": tree_digest(Path(a.guidance_ref)),
                "logs": [text_sha(t) for t in a.working_logs],
            }
            for a in state.agents
        ],
        "best_so_far": [r.best_so_far for r in state.iterations],
        "rating_after": [r.rating_after for r in state.iterations],
    }
    return canonical_dumps(data)


def run_dir_fingerprint(run_dir: Path) -> str:
    return state_fingerprint(load_state(run_dir, prune=False))


def dir_snapshot(root: Path, ignore: tuple[str, ...] = ()) -> dict[str, str]:
    """Relative path -> content hash for every file under root."""
    out = {}
    for path in sorted(Path(root).rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(root).as_posix()
        if rel in ignore:
            continue
        out[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def assert_dirs_equal(a: Path, b: Path, ignore: tuple[str, ...] = ()) -> None:
    snap_a, snap_b = dir_snapshot(a, ignore), dir_snapshot(b, ignore)
    assert snap_a == snap_b, (
        f"directories differ:\n only in {a}: {sorted(set(snap_a) - set(snap_b))}"
        f"\n only in {b}: {sorted(set(snap_b) - set(snap_a))}"
        f"\n content: {sorted(k for k in snap_a.keys() & snap_b.keys() if snap_a[k] != snap_b[k])}"
    )
