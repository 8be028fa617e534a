"""Equivalent-token arithmetic and report rendering."""

from __future__ import annotations

from random import Random

import pytest

from eve.accounting import (
    DEFAULT_TEQ_WEIGHTS,
    REPORT_CSV_HEADER,
    equivalent_tokens,
    iteration_cost,
)
from eve.model import TokenUsage


class TestEquivalentTokens:
    def test_zero_usage_costs_nothing(self):
        assert equivalent_tokens(TokenUsage(0, 0, 0)) == 0.0

    def test_cached_tokens_have_unit_weight(self):
        assert equivalent_tokens(TokenUsage(1_000_000, 0, 0)) == 1_000_000.0

    def test_mixed_usage(self):
        # 100 + 2*50 + 12*10
        assert equivalent_tokens(TokenUsage(100, 50, 10)) == 320.0

    def test_weight_ratio_is_exactly_one_two_twelve(self):
        w_cached, w_fresh, w_out = DEFAULT_TEQ_WEIGHTS
        assert w_fresh / w_cached == 2.0
        assert w_out / w_cached == 12.0

    def test_componentwise_linearity(self):
        rng = Random(11)
        for _ in range(200):
            a = TokenUsage(rng.randrange(10**6), rng.randrange(10**6), rng.randrange(10**5))
            b = TokenUsage(rng.randrange(10**6), rng.randrange(10**6), rng.randrange(10**5))
            combined = TokenUsage(
                a.cached_input + b.cached_input,
                a.fresh_input + b.fresh_input,
                a.output + b.output,
            )
            assert equivalent_tokens(a) + equivalent_tokens(b) == equivalent_tokens(combined)

    def test_custom_weights(self):
        assert equivalent_tokens(TokenUsage(1, 1, 1), weights=(1.0, 3.0, 10.0)) == 14.0


class TestIterationCost:
    def test_two_sessions_pool_their_cost(self):
        sessions = [TokenUsage(100, 50, 10), TokenUsage(100, 50, 10)]
        report = iteration_cost(sessions, prior_cumulative=1000.0)
        assert report.step_teq == 640.0
        assert report.cumulative_teq == 1640.0

    def test_all_cached_usage_has_cache_fraction_one(self):
        report = iteration_cost([TokenUsage(500, 0, 0), TokenUsage(700, 0, 0)], 0.0)
        assert report.cache_fraction == 1.0

    def test_pooled_cache_fraction(self):
        # cached input dominates total input in long cached conversations
        report = iteration_cost([TokenUsage(941, 59, 0)], 0.0)
        assert report.cache_fraction == pytest.approx(0.941, abs=1e-12)

    def test_no_sessions_means_zero_fraction(self):
        report = iteration_cost([], 5.0)
        assert report.step_teq == 0.0
        assert report.cumulative_teq == 5.0
        assert report.cache_fraction == 0.0

    def test_negative_prior_rejected(self):
        with pytest.raises(ValueError):
            iteration_cost([], -1.0)

    def test_millions_rendering(self):
        report = iteration_cost([TokenUsage(2_000_000, 100_000, 10_000)], 0.0)
        assert report.step_teq_m == pytest.approx(2.32, abs=1e-12)
        assert report.cumulative_teq_m == report.step_teq_m


class TestReportSchema:
    def test_csv_header_is_stable(self):
        assert REPORT_CSV_HEADER == "iteration,tag,error,best_so_far,step_teq_M,cumulative_teq_M"
