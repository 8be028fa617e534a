"""Run-directory persistence and integrity checking.

Layout::

    <run>/config.json
    <run>/base_repo/...
    <run>/populations/solvers/<id>/{files/, eval.log, meta.json}
    <run>/populations/agents/<id>/{guidance/, logs/, meta.json}
    <run>/iterations/<nn>/result.json
    <run>/run.lock

All JSON files are UTF-8 with sorted keys so that identical run states are
byte-identical on disk. ``result.json`` is the commit marker of an iteration:
population artifacts whose origin lies beyond the last committed result are
pruned on load, which makes interrupted iterations re-execute from scratch.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import stat
from pathlib import Path
from typing import Any

from .errors import IntegrityError, LockError
from .model import (
    AgentRecord,
    IterationResult,
    RunConfig,
    RunState,
    SolverRecord,
)

logger = logging.getLogger(__name__)

CONFIG_NAME = "config.json"
BASE_REPO_DIRNAME = "base_repo"
LOCK_NAME = "run.lock"


def scratch_base() -> str | None:
    """Parent for disposable scratch trees: a ramdisk when one is available."""
    override = os.environ.get("EVE_SCRATCH_DIR")
    if override:
        return override
    shm = "/dev/shm"
    if os.path.isdir(shm) and os.access(shm, os.W_OK):
        return shm
    return None


# ---------------------------------------------------------------------------
# canonical JSON + hashing helpers


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_dumps(obj), encoding="utf-8")


def read_json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def walk_files(root: Path) -> list[tuple[str, str]]:
    """(absolute path, posix relpath) of every file under root, unordered."""
    out: list[tuple[str, str]] = []
    stack = [(str(root), "")]
    while stack:
        base, rel = stack.pop()
        with os.scandir(base) as entries:
            for entry in entries:
                child_rel = f"{rel}/{entry.name}" if rel else entry.name
                if entry.is_dir(follow_symlinks=False):
                    stack.append((entry.path, child_rel))
                else:
                    out.append((entry.path, child_rel))
    return out


def iter_files(root: Path, exclude_prefixes: tuple[str, ...] = ()) -> list[str]:
    """Relative paths of all files under ``root``, sorted, minus excluded trees."""
    out = []
    for _, rel in walk_files(root):
        if any(rel == p or rel.startswith(p + "/") for p in exclude_prefixes):
            continue
        out.append(rel)
    return sorted(out)


def tree_digest(root: Path, exclude_prefixes: tuple[str, ...] = ()) -> str:
    """Stable content hash of a file tree: per-file sha256 over sorted paths."""
    h = hashlib.sha256()
    for rel in iter_files(root, exclude_prefixes):
        h.update(rel.encode("utf-8"))
        h.update(b"\0")
        h.update(sha256_file(root / rel).encode("ascii"))
        h.update(b"\n")
    return h.hexdigest()


def copy_tree(src: Path, dest: Path) -> None:
    """Copy file contents only (no metadata); much cheaper than copytree."""
    copy_tree_hashed(src, dest)


def copy_tree_hashed(src: Path, dest: Path) -> dict[str, str]:
    """Copy a tree's file contents and return each file's hash, by relpath.

    Metadata and empty directories are not preserved; snapshots are defined
    by file contents alone.
    """
    dest_str = str(dest)
    digests: dict[str, str] = {}
    dirs_made: set[str] = set()
    os.makedirs(dest_str, exist_ok=True)
    dirs_made.add(dest_str)
    for abs_path, rel in walk_files(Path(src)):
        target = f"{dest_str}/{rel}"
        parent = target.rsplit("/", 1)[0]
        if parent not in dirs_made:
            os.makedirs(parent, exist_ok=True)
            dirs_made.add(parent)
        with open(abs_path, "rb") as fh:
            data = fh.read()
        with open(target, "wb") as fh:
            fh.write(data)
        digests[rel] = sha256_bytes(data)
    return digests


def make_tree_readonly(root: Path) -> None:
    for path in root.rglob("*"):
        if path.is_file():
            path.chmod(path.stat().st_mode & ~(stat.S_IWUSR | stat.S_IWGRP | stat.S_IWOTH))


def remove_tree(root: Path) -> None:
    """rmtree that tolerates read-only snapshot files."""

    def _onerror(func, path, exc_info):  # noqa: ANN001 - shutil callback shape
        os.chmod(path, stat.S_IWUSR | stat.S_IRUSR)
        func(path)

    shutil.rmtree(root, onerror=_onerror)


# ---------------------------------------------------------------------------
# path helpers


class RunPaths:
    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)

    @property
    def config(self) -> Path:
        return self.run_dir / CONFIG_NAME

    @property
    def base_repo(self) -> Path:
        return self.run_dir / BASE_REPO_DIRNAME

    @property
    def solvers(self) -> Path:
        return self.run_dir / "populations" / "solvers"

    @property
    def agents(self) -> Path:
        return self.run_dir / "populations" / "agents"

    @property
    def iterations(self) -> Path:
        return self.run_dir / "iterations"

    @property
    def lock(self) -> Path:
        return self.run_dir / LOCK_NAME

    def solver_dir(self, solver_id: str) -> Path:
        return self.solvers / solver_id

    def agent_dir(self, agent_id: str) -> Path:
        return self.agents / agent_id

    def iteration_dir(self, n: int) -> Path:
        return self.iterations / f"{n:02d}"

    def agent_log_name(self, iteration: int, slot: int) -> str:
        return f"{iteration:02d}.{slot}.log"


# ---------------------------------------------------------------------------
# saving


def save_config(run_dir: Path, config: RunConfig, variant: str, rng_seed: int) -> None:
    data = config.to_dict()
    data["variant"] = variant
    data["rng_seed"] = rng_seed
    write_json(RunPaths(run_dir).config, data)


def load_config(run_dir: Path) -> tuple[RunConfig, str, int]:
    data = read_json(RunPaths(run_dir).config)
    variant = data.pop("variant")
    rng_seed = int(data.pop("rng_seed"))
    return RunConfig.from_dict(data), variant, rng_seed


def save_solver(run_dir: Path, record: SolverRecord, files_src: Path) -> Path:
    """Persist a solver snapshot; returns the immutable files directory."""
    dest = RunPaths(run_dir).solver_dir(record.id)
    files_dir = dest / "files"
    copy_tree(files_src, files_dir)
    make_tree_readonly(files_dir)
    (dest / "eval.log").write_text(record.eval_log, encoding="utf-8")
    write_json(dest / "meta.json", record.meta_dict())
    return files_dir


def save_agent(
    run_dir: Path,
    record: AgentRecord,
    guidance_src: Path,
    carried_logs: list[tuple[str, str]] | None = None,
) -> Path:
    """Persist an agent snapshot; ``carried_logs`` are (filename, text) pairs."""
    dest = RunPaths(run_dir).agent_dir(record.id)
    guidance_dir = dest / "guidance"
    copy_tree(guidance_src, guidance_dir)
    make_tree_readonly(guidance_dir)
    logs_dir = dest / "logs"
    logs_dir.mkdir(parents=True, exist_ok=True)
    for name, text in carried_logs or []:
        (logs_dir / name).write_text(text, encoding="utf-8")
    write_json(dest / "meta.json", record.meta_dict())
    return guidance_dir


def append_agent_log(run_dir: Path, agent_id: str, iteration: int, slot: int, text: str) -> str:
    """Write one session log file; returns its run-relative reference path."""
    paths = RunPaths(run_dir)
    name = paths.agent_log_name(iteration, slot)
    logs_dir = paths.agent_dir(agent_id) / "logs"
    logs_dir.mkdir(parents=True, exist_ok=True)
    (logs_dir / name).write_text(text, encoding="utf-8")
    return f"populations/agents/{agent_id}/logs/{name}"


def save_iteration(run_dir: Path, result: IterationResult) -> None:
    """Commit an iteration. This write is the atomicity marker."""
    write_json(
        RunPaths(run_dir).iteration_dir(result.iteration) / "result.json",
        result.to_dict(),
    )


# ---------------------------------------------------------------------------
# loading


def _sorted_population_ids(root: Path) -> list[str]:
    if not root.is_dir():
        return []
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def _committed_iterations(paths: RunPaths) -> list[int]:
    if not paths.iterations.is_dir():
        return []
    ns = []
    for child in paths.iterations.iterdir():
        if child.is_dir() and (child / "result.json").is_file():
            try:
                ns.append(int(child.name))
            except ValueError:
                raise IntegrityError(f"unexpected iteration directory {child.name!r}")
    return sorted(ns)


def prune_uncommitted(run_dir: Path) -> list[str]:
    """Remove artifacts of iterations that never committed a result.json.

    Returns the run-relative paths that were removed. This is the resume
    path after an interrupt: partial iterations are re-executed from scratch.
    Only records unreferenced by any committed result are candidates, so a
    genuinely corrupted committed record is never silently deleted (loading
    it fails loudly instead).
    """
    paths = RunPaths(run_dir)
    committed = _committed_iterations(paths)
    last = committed[-1] if committed else 0
    removed: list[str] = []

    referenced_solvers = {"0000"}
    referenced_agents = {"0000"}
    for n in committed:
        result = read_json(paths.iteration_dir(n) / "result.json")
        for outcome in result.get("working", []):
            if outcome.get("new_solver_id"):
                referenced_solvers.add(outcome["new_solver_id"])
            if outcome.get("new_agent_id"):
                referenced_agents.add(outcome["new_agent_id"])

    if paths.iterations.is_dir():
        for child in sorted(paths.iterations.iterdir()):
            if child.is_dir() and not (child / "result.json").is_file():
                remove_tree(child)
                removed.append(f"iterations/{child.name}")

    for kind, root, referenced in (
        ("solvers", paths.solvers, referenced_solvers),
        ("agents", paths.agents, referenced_agents),
    ):
        for pid in _sorted_population_ids(root):
            if pid in referenced:
                continue
            meta_path = root / pid / "meta.json"
            try:
                origin = int(read_json(meta_path)["origin_iteration"])
            except (OSError, ValueError, KeyError, json.JSONDecodeError):
                origin = None
            if origin is None or origin > last:
                remove_tree(root / pid)
                removed.append(f"populations/{kind}/{pid}")

    for pid in _sorted_population_ids(paths.agents):
        logs_dir = paths.agents / pid / "logs"
        if not logs_dir.is_dir():
            continue
        for log in sorted(logs_dir.iterdir()):
            try:
                n = int(log.name.split(".")[0])
            except ValueError:
                continue
            if n > last:
                log.unlink()
                removed.append(f"populations/agents/{pid}/logs/{log.name}")

    if removed:
        logger.warning("pruned %d uncommitted artifact(s) from %s", len(removed), run_dir)
    return removed


def load_state(run_dir: Path, prune: bool = True) -> RunState:
    """Rebuild a RunState from disk, replaying ratings from iteration history."""
    run_dir = Path(run_dir)
    paths = RunPaths(run_dir)
    if not paths.config.is_file():
        raise IntegrityError(f"{run_dir} is not a run directory (missing config.json)")
    if prune:
        prune_uncommitted(run_dir)

    config, variant, rng_seed = load_config(run_dir)
    state = RunState(run_dir, config, variant, rng_seed)

    for sid in _sorted_population_ids(paths.solvers):
        sdir = paths.solver_dir(sid)
        try:
            meta = read_json(sdir / "meta.json")
            score = meta["score"]
            record = SolverRecord(
                id=meta["id"],
                files_ref=sdir / "files",
                eval_log=(sdir / "eval.log").read_text(encoding="utf-8"),
                score=None if score is None else float(score),
                origin_iteration=int(meta["origin_iteration"]),
                producer_agent_id=meta.get("producer_agent_id"),
                valid=bool(meta["valid"]),
                tag=meta.get("tag"),
            )
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise IntegrityError(f"unreadable solver record {sid}: {exc}") from exc
        if record.id != sid:
            raise IntegrityError(f"solver meta id {record.id!r} does not match dir {sid!r}")
        state.add_solver(record)

    for aid in _sorted_population_ids(paths.agents):
        adir = paths.agent_dir(aid)
        try:
            meta = read_json(adir / "meta.json")
            logs_dir = adir / "logs"
            logs = []
            if logs_dir.is_dir():
                for log in sorted(logs_dir.iterdir(), key=_log_sort_key):
                    logs.append(log.read_text(encoding="utf-8"))
            initial = float(meta["initial_rating"])
            record = AgentRecord(
                id=meta["id"],
                guidance_ref=adir / "guidance",
                rating=initial,
                working_logs=logs,
                parent_id=meta.get("parent_id"),
                origin_iteration=int(meta["origin_iteration"]),
                initial_rating=initial,
            )
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise IntegrityError(f"unreadable agent record {aid}: {exc}") from exc
        if record.id != aid:
            raise IntegrityError(f"agent meta id {record.id!r} does not match dir {aid!r}")
        state.add_agent(record)

    committed = _committed_iterations(paths)
    expected = list(range(1, len(committed) + 1))
    if committed != expected:
        raise IntegrityError(
            f"iteration history is not contiguous: found {committed}", []
        )
    for n in committed:
        try:
            result = IterationResult.from_dict(
                read_json(paths.iteration_dir(n) / "result.json")
            )
            for agent_id, rating in result.rating_after.items():
                state.agent(agent_id).rating = float(rating)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise IntegrityError(f"unreadable result for iteration {n}: {exc}") from exc
        state.iterations.append(result)

    return state


def _log_sort_key(path: Path) -> tuple[int, int]:
    stem = path.name.rsplit(".log", 1)[0]
    n, slot = stem.split(".")
    return int(n), int(slot)


# ---------------------------------------------------------------------------
# locking


class RunLock:
    """Exclusive advisory lock over one run directory (stale locks are stolen)."""

    def __init__(self, run_dir: Path):
        self.path = RunPaths(run_dir).lock

    def __enter__(self) -> "RunLock":
        self.acquire()
        return self

    def __exit__(self, *exc) -> None:
        self.release()

    def acquire(self) -> None:
        if self.path.exists():
            try:
                pid = int(self.path.read_text().strip())
            except ValueError:
                pid = None
            if pid is not None and _pid_alive(pid):
                raise LockError(f"run is locked by pid {pid} ({self.path})")
            logger.warning("removing stale lock %s", self.path)
            self.path.unlink()
        fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))

    def release(self) -> None:
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


# ---------------------------------------------------------------------------
# integrity


def verify_run(run_dir: Path) -> list[str]:
    """Check a run directory against the persistence contract.

    Returns a list of problems (empty means the directory is sound).
    Uncommitted partial artifacts are not failures; they are resume work.
    """
    run_dir = Path(run_dir)
    paths = RunPaths(run_dir)
    problems: list[str] = []

    if not paths.config.is_file():
        return [f"missing {CONFIG_NAME}"]
    try:
        config, variant, _ = load_config(run_dir)
        config.validate()
    except Exception as exc:  # noqa: BLE001 - surface every config defect
        return [f"bad config.json: {exc}"]

    try:
        state = load_state(run_dir, prune=False)
    except IntegrityError as exc:
        return [str(exc)]
    except Exception as exc:  # noqa: BLE001
        return [f"unreadable run state: {exc}"]

    committed = _committed_iterations(paths)
    last = committed[-1] if committed else 0

    if not state.solvers:
        problems.append("no solver records (missing seed evaluation)")
    else:
        seed = state.solvers[0]
        if seed.origin_iteration != 0:
            problems.append("first solver record is not the iteration-0 seed")
    for record in state.solvers:
        if record.origin_iteration > last:
            continue  # uncommitted leftovers, resume will prune
        if not Path(record.files_ref).is_dir():
            problems.append(f"solver {record.id}: missing files snapshot")
        if record.valid and not _finite(record.score):
            problems.append(f"solver {record.id}: non-finite score on valid record")

    for record in state.agents:
        if not Path(record.guidance_ref).is_dir():
            problems.append(f"agent {record.id}: missing guidance snapshot")
        if not _finite(record.rating):
            problems.append(f"agent {record.id}: non-finite rating")

    prev_best: float | None = None
    prev_teq = 0.0
    for result in state.iterations:
        n = result.iteration
        if prev_best is not None and result.best_so_far > prev_best + 1e-12:
            problems.append(f"iteration {n}: best_so_far increased")
        prev_best = result.best_so_far
        if result.cumulative_teq + 1e-9 < prev_teq:
            problems.append(f"iteration {n}: cumulative_teq decreased")
        prev_teq = result.cumulative_teq
        for outcome in result.working:
            if outcome.agent_id not in {a.id for a in state.agents}:
                problems.append(f"iteration {n}: unknown working agent {outcome.agent_id}")
            if outcome.new_solver_id is not None and outcome.new_solver_id not in {
                s.id for s in state.solvers
            }:
                problems.append(f"iteration {n}: unknown solver {outcome.new_solver_id}")
        w = result.win_loss
        size = len(result.working)
        if len(w) != size or any(len(row) != size for row in w):
            problems.append(f"iteration {n}: win_loss matrix is not {size}x{size}")
        else:
            for i in range(size):
                for j in range(i + 1, size):
                    a, b = w[i][j], w[j][i]
                    if (a is None) != (b is None):
                        problems.append(f"iteration {n}: one-sided outcome at ({i},{j})")
                    elif a is not None and abs(a + b - 1.0) > 1e-9:
                        problems.append(f"iteration {n}: win_loss[{i}][{j}] pair sum != 1")

    return problems


def _finite(x: float) -> bool:
    return x == x and x not in (float("inf"), float("-inf"))
