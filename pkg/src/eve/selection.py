"""Rank-biased sampling of working agents, reference solvers, and reference agents.

Candidates are ranked by score (solvers) or rating (agents), best first, with
ties broken by older id. Rank r receives weight ``exp(-beta * r)``; sampling
is sequential without replacement over the remaining candidates. When the
requested count covers the whole population the ranked population is returned
directly and the rng is not consumed (this shortcut is part of the replay
contract relied on by deterministic resume).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from random import Random
from typing import Callable, Sequence, TypeVar

from .model import AgentRecord, SolverRecord

T = TypeVar("T")


@dataclass
class RankedCandidate:
    """One candidate's position in a ranking (rank 0 is best)."""

    id: str
    key: float
    rank: int


def rank_weights(n: int, beta: float) -> list[float]:
    """Normalized selection weights for ranks 0..n-1."""
    if n < 1:
        raise ValueError("cannot rank an empty candidate set")
    raw = [math.exp(-beta * r) for r in range(n)]
    total = math.fsum(raw)
    return [w / total for w in raw]


def rank_by_key(
    items: Sequence[T],
    key_of: Callable[[T], float],
    id_of: Callable[[T], str],
) -> list[T]:
    """Sort candidates best-first: higher key wins, ties go to the older id."""
    return sorted(items, key=lambda it: (-key_of(it), id_of(it)))


def ranked_candidates(
    items: Sequence[T],
    key_of: Callable[[T], float],
    id_of: Callable[[T], str],
) -> list[RankedCandidate]:
    order = rank_by_key(items, key_of, id_of)
    return [
        RankedCandidate(id=id_of(it), key=key_of(it), rank=r)
        for r, it in enumerate(order)
    ]


def _draw_without_replacement(
    ranked: list[T], weights: list[float], count: int, rng: Random
) -> list[T]:
    remaining = list(zip(ranked, weights))
    picked: list[T] = []
    for _ in range(count):
        total = sum(w for _, w in remaining)
        u = rng.random() * total
        acc = 0.0
        chosen = len(remaining) - 1
        for idx, (_, w) in enumerate(remaining):
            acc += w
            if u < acc:
                chosen = idx
                break
        picked.append(remaining.pop(chosen)[0])
    return picked


def _sample(
    items: Sequence[T],
    count: int,
    beta: float,
    rng: Random,
    key_of: Callable[[T], float],
    id_of: Callable[[T], str],
) -> list[T]:
    if not items:
        raise ValueError("cannot sample from an empty population")
    if count < 1:
        raise ValueError("sample count must be >= 1")
    ranked = rank_by_key(items, key_of, id_of)
    if count >= len(ranked):
        return list(ranked)
    weights = rank_weights(len(ranked), beta)
    picked = _draw_without_replacement(ranked, weights, count, rng)
    return rank_by_key(picked, key_of, id_of)


def sample_working_agents(
    agents: Sequence[AgentRecord], count: int, beta: float, rng: Random
) -> list[AgentRecord]:
    """Sample distinct working agents by rating, best-ranked order.

    Returns at most ``min(count, len(agents))`` distinct agents; filling
    short samples up to the configured slot count (by cycling) is the
    orchestrator's job.
    """
    return _sample(agents, count, beta, rng, lambda a: a.rating, lambda a: a.id)


def sample_reference_solvers(
    solvers: Sequence[SolverRecord], count: int, beta: float, rng: Random
) -> list[SolverRecord]:
    """Sample distinct valid reference solvers by score, best-ranked order.

    The first entry (rank 0 of the sample) is the workspace prefill candidate.
    """
    valid = [s for s in solvers if s.valid]
    return _sample(valid, count, beta, rng, lambda s: s.score, lambda s: s.id)


def sample_reference_agents(
    agents: Sequence[AgentRecord], count: int, beta: float, rng: Random
) -> list[AgentRecord]:
    """Sample distinct reference agents by rating, best-ranked order."""
    return _sample(agents, count, beta, rng, lambda a: a.rating, lambda a: a.id)
