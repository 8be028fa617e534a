"""Rank-biased sampling: weights, replacement rules, and statistical behavior."""

from __future__ import annotations

import math
from pathlib import Path
from random import Random

import pytest

from eve.model import AgentRecord, SolverRecord
from eve.selection import (
    rank_weights,
    ranked_candidates,
    sample_reference_agents,
    sample_reference_solvers,
    sample_working_agents,
)


def agent(i: int, rating: float) -> AgentRecord:
    return AgentRecord(id=f"{i:04d}", guidance_ref=Path("/g"), rating=rating)


def solver(i: int, error: float, valid: bool = True) -> SolverRecord:
    return SolverRecord(
        id=f"{i:04d}",
        files_ref=Path("/f"),
        eval_log="",
        score=-error if valid else None,
        origin_iteration=0,
        valid=valid,
    )


class TestRankWeights:
    def test_beta_zero_is_uniform(self):
        assert rank_weights(3, 0.0) == pytest.approx([1 / 3] * 3, abs=1e-15)

    def test_beta_ln2_halves_each_rank(self):
        # normalizing 1, 1/2, 1/4 gives 4/7, 2/7, 1/7
        weights = rank_weights(3, math.log(2))
        assert weights == pytest.approx([4 / 7, 2 / 7, 1 / 7], abs=1e-12)

    def test_single_candidate(self):
        assert rank_weights(1, 5.0) == [1.0]

    def test_empty_is_an_error(self):
        with pytest.raises(ValueError):
            rank_weights(0, 1.0)

    @pytest.mark.parametrize("n,beta", [(2, 0.0), (5, 0.7), (17, 2.3), (100, 0.01)])
    def test_sums_to_one_and_nonincreasing(self, n, beta):
        weights = rank_weights(n, beta)
        assert abs(sum(weights) - 1.0) < 1e-12
        assert all(a >= b for a, b in zip(weights, weights[1:]))


class TestRankedCandidates:
    def test_ranks_are_a_permutation_with_ties_to_older_id(self):
        items = [agent(2, 1500.0), agent(1, 1500.0), agent(0, 1600.0)]
        ranked = ranked_candidates(items, lambda a: a.rating, lambda a: a.id)
        assert [c.rank for c in ranked] == [0, 1, 2]
        assert [c.id for c in ranked] == ["0000", "0001", "0002"]


class TestSampleWorkingAgents:
    def test_single_agent_population_returns_it_once(self):
        pop = [agent(0, 1500.0)]
        assert [a.id for a in sample_working_agents(pop, 2, 0.7, Random(0))] == ["0000"]

    def test_count_covering_population_returns_everyone_ranked(self):
        pop = [agent(0, 1400.0), agent(1, 1600.0)]
        sampled = sample_working_agents(pop, 5, 0.7, Random(0))
        assert [a.id for a in sampled] == ["0001", "0000"]

    def test_sharp_beta_selects_top_rated(self):
        pop = [agent(0, 1600.0), agent(1, 1500.0), agent(2, 1400.0)]
        for seed in range(50):
            (picked,) = sample_working_agents(pop, 1, 50.0, Random(seed))
            assert picked.id == "0000"

    def test_beta_zero_is_empirically_uniform(self):
        pop = [agent(0, 1600.0), agent(1, 1500.0), agent(2, 1400.0)]
        rng = Random(1234)
        counts = {a.id: 0 for a in pop}
        draws = 10_000
        for _ in range(draws):
            (picked,) = sample_working_agents(pop, 1, 0.0, rng)
            counts[picked.id] += 1
        expected = draws / 3
        for count in counts.values():
            assert abs(count / draws - 1 / 3) < 0.02
        # chi-square with 2 dof; 13.815 is the p=0.001 critical value
        stat = sum((c - expected) ** 2 / expected for c in counts.values())
        assert stat < 13.815

    def test_without_replacement_yields_distinct_agents(self):
        pop = [agent(i, 1500.0 + i) for i in range(5)]
        for seed in range(20):
            sampled = sample_working_agents(pop, 3, 0.7, Random(seed))
            assert len({a.id for a in sampled}) == 3

    def test_deterministic_under_fixed_seed(self):
        pop = [agent(i, 1500.0 + 7 * i) for i in range(6)]
        first = [a.id for a in sample_working_agents(pop, 3, 0.7, Random(99))]
        second = [a.id for a in sample_working_agents(pop, 3, 0.7, Random(99))]
        assert first == second

    def test_empty_population_is_an_error(self):
        with pytest.raises(ValueError):
            sample_working_agents([], 1, 0.7, Random(0))


class TestSampleReferenceSolvers:
    def test_singleton_population_is_the_prefill(self):
        pop = [solver(0, 0.4848)]
        sampled = sample_reference_solvers(pop, 8, 0.7, Random(0))
        assert [s.id for s in sampled] == ["0000"]

    def test_undersized_population_returns_all_valid(self):
        pop = [solver(i, 0.1 * (i + 1)) for i in range(5)]
        sampled = sample_reference_solvers(pop, 8, 0.7, Random(0))
        assert len(sampled) == 5
        assert sampled[0].id == "0000"  # lowest error ranks first

    def test_invalid_solvers_are_never_sampled(self):
        pop = [solver(0, 0.5), solver(1, 0.0, valid=False), solver(2, 0.4)]
        for seed in range(200):
            sampled = sample_reference_solvers(pop, 2, 0.0, Random(seed))
            assert all(s.valid for s in sampled)
            assert "0001" not in {s.id for s in sampled}

    def test_prefill_is_best_of_sample(self):
        pop = [solver(i, 0.5 - 0.01 * i) for i in range(10)]
        for seed in range(50):
            sampled = sample_reference_solvers(pop, 4, 0.7, Random(seed))
            best = min(sampled, key=lambda s: s.error)
            assert sampled[0] is best


class TestSampleReferenceAgents:
    def test_undersized_population_returns_both(self):
        pop = [agent(0, 1500.0), agent(1, 1520.0)]
        sampled = sample_reference_agents(pop, 4, 0.7, Random(0))
        assert [a.id for a in sampled] == ["0001", "0000"]

    def test_large_beta_prefers_top_rated(self):
        pop = [agent(i, 1400.0 + 50 * i) for i in range(5)]
        for seed in range(30):
            sampled = sample_reference_agents(pop, 2, 50.0, Random(seed))
            assert sampled[0].id == "0004"

    def test_fixed_seed_replays_identically(self):
        pop = [agent(i, 1450.0 + 11 * i) for i in range(7)]
        a = [x.id for x in sample_reference_agents(pop, 3, 0.7, Random(5))]
        b = [x.id for x in sample_reference_agents(pop, 3, 0.7, Random(5))]
        assert a == b
