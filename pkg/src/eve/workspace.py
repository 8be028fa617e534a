"""Isolated per-agent workspaces and editable-surface enforcement.

Every working agent of an iteration gets its own disposable directory holding
a copy of the base repository (with the prefill candidate overlaid onto the
allowlist paths), read-only reference material under ``.refs/``, its own
guidance tree under ``.guidance/``, a ``task.json`` manifest, and an ``.eve/``
output directory. Workspaces of one iteration are byte-identical except for
the guidance tree, so output differences attribute to agent strategy.

After the session a content-hash diff against the pristine snapshot decides
whether the agent stayed inside the permitted surface: any changed, created,
or deleted path outside the allowlist (guidance and declared outputs are
exempt) is a violation, and violating candidates are never extracted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BoundaryRefusedError
from .storage import (
    canonical_dumps,
    copy_tree,
    copy_tree_hashed,
    read_json,
    sha256_bytes,
    tree_digest,
    walk_files,
)

logger = logging.getLogger(__name__)

GUIDANCE_DIRNAME = ".guidance"
OUTPUT_DIRNAME = ".eve"
REFS_DIRNAME = ".refs"
TASK_MANIFEST_NAME = "task.json"
PRISTINE_NAME = "pristine.json"

SESSION_LOG_PATH = f"{OUTPUT_DIRNAME}/session.log"
TOKEN_USAGE_PATH = f"{OUTPUT_DIRNAME}/tokens.json"
DONE_FLAG_PATH = f"{OUTPUT_DIRNAME}/done"

# trees exempt from the boundary diff: the agent's own guidance (revisable)
# and the declared output channel
EXEMPT_PREFIXES = (GUIDANCE_DIRNAME, OUTPUT_DIRNAME)


@dataclass
class ReferenceSolverEntry:
    id: str
    files_dir: Path
    error: float
    eval_log: str


@dataclass
class ReferenceAgentEntry:
    id: str
    guidance_dir: Path
    rating: float
    working_logs: list[str]


@dataclass
class WorkspaceSpec:
    """The materialized context one agent operates in."""

    root: Path
    allowlist: list[str]
    prefill_solver_id: str | None
    guidance_dir: Path
    task_manifest: Path
    reference_solver_manifest: Path
    reference_agent_manifest: Path
    pristine: dict[str, str] = field(default_factory=dict)


@dataclass
class BoundaryReport:
    """Result of diffing a finished workspace against its pristine snapshot."""

    changed_paths: list[str]
    violations: list[str]

    @property
    def passed(self) -> bool:
        return not self.violations


def _tail(text: str, cap: int) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= cap:
        return text
    return raw[-cap:].decode("utf-8", errors="replace")


def build_workspace(
    root: Path,
    base_repo: Path,
    allowlist: list[str],
    prefill: tuple[str, Path] | None,
    reference_solvers: list[ReferenceSolverEntry],
    reference_agents: list[ReferenceAgentEntry],
    guidance_src: Path,
    log_cap: int = 16384,
) -> WorkspaceSpec:
    """Materialize one workspace. ``prefill`` is (solver_id, files_dir) or None.

    Raises if an allowlist path is still missing after the prefill overlay:
    the editable surface must exist before the session starts.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    # pristine hashes are collected while writing, so the boundary diff does
    # not need a second full read of the fresh workspace
    pristine: dict[str, str] = {}

    def _write_text(rel: str, text: str) -> None:
        target = root / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        target.write_bytes(data)
        pristine[rel] = sha256_bytes(data)

    pristine.update(copy_tree_hashed(base_repo, root))

    prefill_id: str | None = None
    prefill_error: float | None = None
    if prefill is not None:
        prefill_id, prefill_files = prefill
        pristine.update(copy_tree_hashed(prefill_files, root))

    missing = [rel for rel in allowlist if not (root / rel).is_file()]
    if missing:
        raise FileNotFoundError(f"allowlist paths missing after prefill: {missing}")

    solver_entries = []
    for ref in reference_solvers:
        ref_prefix = f"{REFS_DIRNAME}/solvers/{ref.id}"
        copied = copy_tree_hashed(ref.files_dir, root / ref_prefix / "files")
        pristine.update({f"{ref_prefix}/files/{rel}": h for rel, h in copied.items()})
        _write_text(f"{ref_prefix}/eval.log", _tail(ref.eval_log, log_cap))
        solver_entries.append(
            {
                "path": f"{ref_prefix}/files",
                "score": ref.error,
                "log_path": f"{ref_prefix}/eval.log",
            }
        )
        if ref.id == prefill_id:
            prefill_error = ref.error

    agent_entries = []
    for ref in reference_agents:
        ref_prefix = f"{REFS_DIRNAME}/agents/{ref.id}"
        copied = copy_tree_hashed(ref.guidance_dir, root / ref_prefix / "guidance")
        pristine.update({f"{ref_prefix}/guidance/{rel}": h for rel, h in copied.items()})
        joined = "\n".join(_tail(log, log_cap) for log in ref.working_logs)
        _write_text(f"{ref_prefix}/logs.txt", joined)
        agent_entries.append(
            {
                "guidance_path": f"{ref_prefix}/guidance",
                "rating": ref.rating,
                "log_path": f"{ref_prefix}/logs.txt",
            }
        )

    solver_manifest = root / REFS_DIRNAME / "solvers.json"
    agent_manifest = root / REFS_DIRNAME / "agents.json"
    _write_text(f"{REFS_DIRNAME}/solvers.json", canonical_dumps(solver_entries))
    _write_text(f"{REFS_DIRNAME}/agents.json", canonical_dumps(agent_entries))

    guidance_dir = root / GUIDANCE_DIRNAME
    copy_tree(guidance_src, guidance_dir)

    out_dir = root / OUTPUT_DIRNAME
    out_dir.mkdir(exist_ok=True)

    task_manifest = root / TASK_MANIFEST_NAME
    _write_text(
        TASK_MANIFEST_NAME,
        canonical_dumps(
            {
                "allowlist": list(allowlist),
                "prefill_score": prefill_error,
                "references_solvers": solver_entries,
                "references_agents": agent_entries,
                "guidance_path": GUIDANCE_DIRNAME,
                "output": {
                    "session_log": SESSION_LOG_PATH,
                    "token_usage": TOKEN_USAGE_PATH,
                    "done_flag": DONE_FLAG_PATH,
                },
            }
        ),
    )

    # base repos must not smuggle content into the exempt trees
    pristine = {
        rel: h
        for rel, h in pristine.items()
        if not any(rel == p or rel.startswith(p + "/") for p in EXEMPT_PREFIXES)
    }
    (out_dir / PRISTINE_NAME).write_text(canonical_dumps(pristine), encoding="utf-8")

    return WorkspaceSpec(
        root=root,
        allowlist=list(allowlist),
        prefill_solver_id=prefill_id,
        guidance_dir=guidance_dir,
        task_manifest=task_manifest,
        reference_solver_manifest=solver_manifest,
        reference_agent_manifest=agent_manifest,
        pristine=pristine,
    )


def boundary_check(spec: WorkspaceSpec) -> BoundaryReport:
    """Diff the workspace against its pristine snapshot.

    Changed, created, and deleted files all count as changes; deleting an
    allowlisted file is an allowed change, everything else outside the
    allowlist is a violation.
    """
    pristine = spec.pristine
    if not pristine:
        snapshot_path = spec.root / OUTPUT_DIRNAME / PRISTINE_NAME
        if not snapshot_path.is_file():
            raise FileNotFoundError(f"pristine snapshot missing: {snapshot_path}")
        pristine = read_json(snapshot_path)

    current = {}
    for abs_path, rel in walk_files(spec.root):
        if any(rel == p or rel.startswith(p + "/") for p in EXEMPT_PREFIXES):
            continue
        with open(abs_path, "rb") as fh:
            current[rel] = sha256_bytes(fh.read())
    allow = set(spec.allowlist)
    changed = sorted(
        set(rel for rel in current if current.get(rel) != pristine.get(rel))
        | set(rel for rel in pristine if rel not in current)
    )
    violations = [rel for rel in changed if rel not in allow]
    return BoundaryReport(changed_paths=changed, violations=violations)


def extract_solver(spec: WorkspaceSpec, report: BoundaryReport, dest: Path) -> Path:
    """Copy the allowlist files into a fresh solver snapshot directory.

    Refuses when the boundary check failed; a candidate produced outside the
    permitted surface is never persisted.
    """
    if not report.passed:
        raise BoundaryRefusedError(
            f"boundary violations: {', '.join(report.violations)}"
        )
    missing = [rel for rel in spec.allowlist if not (spec.root / rel).is_file()]
    if missing:
        raise FileNotFoundError(f"allowlist files missing at extraction: {missing}")
    dest = Path(dest)
    for rel in spec.allowlist:
        target = dest / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes((spec.root / rel).read_bytes())
    return dest


def extract_agent_revision(
    spec: WorkspaceSpec, producer_guidance_digest: str
) -> tuple[bool, Path]:
    """Decide whether the session revised its guidance tree.

    Returns (changed, guidance_dir). A deleted guidance tree is treated as
    unchanged (with a warning) rather than as a revision to nothing.
    """
    if not spec.guidance_dir.is_dir():
        logger.warning("guidance tree deleted in %s; treating as unchanged", spec.root)
        return False, spec.guidance_dir
    changed = tree_digest(spec.guidance_dir) != producer_guidance_digest
    return changed, spec.guidance_dir
