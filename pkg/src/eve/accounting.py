"""Equivalent-token cost normalization and per-run reporting.

Heterogeneous token categories are mapped to a single cost-weighted scale:
``T_eq = cached + 2 * fresh + 12 * output`` (the default weight ratio follows
cached-input : fresh-input : output API pricing and is config-overridable).
Reports render T_eq in millions.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from .model import TokenUsage

if TYPE_CHECKING:
    from .model import RunState

DEFAULT_TEQ_WEIGHTS: tuple[float, float, float] = (1.0, 2.0, 12.0)

REPORT_CSV_HEADER = "iteration,tag,error,best_so_far,step_teq_M,cumulative_teq_M"


def equivalent_tokens(
    usage: TokenUsage, weights: tuple[float, float, float] = DEFAULT_TEQ_WEIGHTS
) -> float:
    """Cost-weighted token count of one session."""
    w_cached, w_fresh, w_out = weights
    return (
        w_cached * usage.cached_input
        + w_fresh * usage.fresh_input
        + w_out * usage.output
    )


@dataclass
class CostReport:
    """Token cost of one iteration, in raw token units (rendered in millions)."""

    step_teq: float
    cumulative_teq: float
    cache_fraction: float
    turns: int | None = None

    @property
    def step_teq_m(self) -> float:
        return self.step_teq / 1e6

    @property
    def cumulative_teq_m(self) -> float:
        return self.cumulative_teq / 1e6


def iteration_cost(
    sessions: Sequence[TokenUsage],
    prior_cumulative: float,
    weights: tuple[float, float, float] = DEFAULT_TEQ_WEIGHTS,
) -> CostReport:
    """Pool the sessions of one iteration into a step and cumulative cost."""
    if prior_cumulative < 0:
        raise ValueError("prior_cumulative must be >= 0")
    step = sum(equivalent_tokens(u, weights) for u in sessions)
    cached = sum(u.cached_input for u in sessions)
    fresh = sum(u.fresh_input for u in sessions)
    denom = cached + fresh
    fraction = cached / denom if denom > 0 else 0.0
    return CostReport(
        step_teq=step,
        cumulative_teq=prior_cumulative + step,
        cache_fraction=fraction,
    )


# ---------------------------------------------------------------------------
# report rows (the data behind trajectory plots and per-iteration tables)


@dataclass
class ReportRow:
    iteration: int
    tag: str
    error: float | None
    best_so_far: float
    step_teq_m: float
    cumulative_teq_m: float
    improved: bool


def build_report_rows(state: "RunState") -> list[ReportRow]:
    """Per-iteration rows: iteration 0 is the seed evaluation."""
    seed = state.solvers[0] if state.solvers else None
    if seed is None or seed.origin_iteration != 0:
        raise ValueError("run has no seed evaluation")
    rows = [
        ReportRow(
            iteration=0,
            tag=seed.tag or "seed",
            error=seed.error,
            best_so_far=seed.error,
            step_teq_m=0.0,
            cumulative_teq_m=0.0,
            improved=False,
        )
    ]
    prev_best = seed.error
    for result in state.iterations:
        best_error = result.best_error
        tag = ""
        if best_error is not None:
            candidates = [
                state.solver(o.new_solver_id)
                for o in result.working
                if o.new_solver_id is not None
            ]
            valid = [s for s in candidates if s.valid]
            if valid:
                best = min(valid, key=lambda s: (s.error, s.id))
                tag = best.tag or ""
        rows.append(
            ReportRow(
                iteration=result.iteration,
                tag=tag,
                error=best_error,
                best_so_far=result.best_so_far,
                step_teq_m=result.step_teq / 1e6,
                cumulative_teq_m=result.cumulative_teq / 1e6,
                improved=best_error is not None and best_error <= prev_best,
            )
        )
        prev_best = min(prev_best, result.best_so_far)
    return rows


def render_report_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_CSV_HEADER.split(","))
    for row in rows:
        writer.writerow(
            [
                row.iteration,
                row.tag,
                "" if row.error is None else repr(row.error),
                repr(row.best_so_far),
                f"{row.step_teq_m:.6f}",
                f"{row.cumulative_teq_m:.6f}",
            ]
        )
    return buf.getvalue()


def render_report_table(rows: Sequence[ReportRow]) -> str:
    """Fixed-width table; '*' marks rows that matched or improved the minimum."""
    header = f"{'Iter':>4}  {'Tag':<24} {'Error':>8}  {'Best-so-far':>12}  {'Step Teq(M)':>11}  {'Cum Teq(M)':>10}"
    lines = [header, "-" * len(header)]
    for row in rows:
        error = "--" if row.error is None else f"{row.error:.4f}"
        best = f"{row.best_so_far:.4f}" + ("*" if row.improved else " ")
        lines.append(
            f"{row.iteration:>4}  {row.tag:<24} {error:>8}  {best:>12}  "
            f"{row.step_teq_m:>11.1f}  {row.cumulative_teq_m:>10.1f}"
        )
    return "\n".join(lines) + "\n"
