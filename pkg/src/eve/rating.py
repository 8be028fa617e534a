"""Pairwise race outcomes and Elo rating updates for working agents.

Within one iteration every working agent refines the same reference context,
so differences in candidate error are attributed to agent strategy: the agent
whose solver achieved lower error wins the pair. Ratings move by the standard
Elo rule ``R_i += K * (S_i - E_i)`` with ``E_i = 1 / (1 + 10^((R_j-R_i)/400))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence


@dataclass(frozen=True)
class MatchOutcome:
    """One scored pairing: ``s_i`` is 1 (i wins), 0 (j wins), or 0.5 (draw)."""

    agent_i: str
    agent_j: str
    s_i: float


def competition(
    errors: Sequence[float | None], tie_epsilon: float = 0.0
) -> list[list[float | None]]:
    """Build the win-loss matrix over working slots from candidate errors.

    ``errors[i]`` is the mean error of slot i's candidate, or None when the
    slot produced no valid solver. Pairs involving a failed slot are skipped
    (left None); the diagonal is None. For evaluated pairs
    ``W[i][j] + W[j][i] == 1``.
    """
    if not errors:
        raise ValueError("competition needs at least one participant")
    n = len(errors)
    w: list[list[float | None]] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            e_i, e_j = errors[i], errors[j]
            if e_i is None or e_j is None:
                continue
            if abs(e_i - e_j) <= tie_epsilon:
                w[i][j] = w[j][i] = 0.5
            elif e_i < e_j:
                w[i][j], w[j][i] = 1.0, 0.0
            else:
                w[i][j], w[j][i] = 0.0, 1.0
    return w


def race_outcomes(
    slot_agent_ids: Sequence[str],
    errors: Sequence[float | None],
    tie_epsilon: float = 0.0,
) -> list[MatchOutcome]:
    """Rating-effective outcomes of a race: evaluated pairs of distinct agents.

    When the same agent occupies both slots (static variants, or a population
    still smaller than the slot count) the pair carries no rating information
    and produces no outcome.
    """
    w = competition(errors, tie_epsilon)
    outcomes = []
    for i in range(len(slot_agent_ids)):
        for j in range(i + 1, len(slot_agent_ids)):
            if w[i][j] is None:
                continue
            if slot_agent_ids[i] == slot_agent_ids[j]:
                continue
            outcomes.append(
                MatchOutcome(agent_i=slot_agent_ids[i], agent_j=slot_agent_ids[j], s_i=w[i][j])
            )
    return outcomes


def elo_expected(r_i: float, r_j: float) -> float:
    """Expected score of the first player; complements sum to 1."""
    return 1.0 / (1.0 + 10.0 ** ((r_j - r_i) / 400.0))


def elo_update(
    ratings: Mapping[str, float],
    outcomes: Sequence[MatchOutcome],
    k: float,
) -> dict[str, float]:
    """Apply outcomes sequentially in sorted pair order; returns new ratings.

    Each outcome updates both participants using the ratings current at that
    point, so every two-player update conserves the rating sum exactly.
    """
    updated = dict(ratings)
    for outcome in sorted(outcomes, key=lambda o: (o.agent_i, o.agent_j)):
        if outcome.agent_i not in updated or outcome.agent_j not in updated:
            missing = outcome.agent_i if outcome.agent_i not in updated else outcome.agent_j
            raise KeyError(f"outcome references unrated agent {missing!r}")
        e_i = elo_expected(updated[outcome.agent_i], updated[outcome.agent_j])
        s_i = outcome.s_i
        updated[outcome.agent_i] += k * (s_i - e_i)
        updated[outcome.agent_j] += k * ((1.0 - s_i) - (1.0 - e_i))
    return updated
