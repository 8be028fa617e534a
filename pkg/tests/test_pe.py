"""Positional-encoding kernels: frozen values, joins, bounds, compositions.

Expected numbers were computed independently by hand or with high-precision
evaluation of the defining formulas; finite differences serve as the
derivative oracle at the log1p join.
"""

from __future__ import annotations

import math

import pytest

from eve.pe import (
    CompressionParams,
    EmbeddingTables,
    compress_linear_clamp,
    compress_log1p,
    compress_sqrt,
    compress_tanh,
    decompose,
    lerp_lookup,
    local_offsets,
    pe_interpolated_demo,
    pe_overflow_gated,
    pe_role_only,
    pe_structured_demo_role,
    pe_structured_function,
    pe_vanilla,
    rescale_global,
    sinusoid_encode,
    untrained_rows,
)

D = 4
PARAMS = CompressionParams(m_train=5, alpha=1.0, delta=2.0, tau=3.0, linear_slope=0.5)


def grid(stop: float, step: float = 0.01) -> list[float]:
    n = int(round(stop / step))
    return [i * step for i in range(n + 1)]


def make_tables(**gates) -> EmbeddingTables:
    demo = [[float(i), float(i) / 2, -float(i), 1.0 + i] for i in range(6)]
    role = [[1.0, 0.0, 0.0, 0.5], [0.0, 1.0, 0.0, -0.5], [0.0, 0.0, 1.0, 0.25]]
    type_rows = [[2.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0]]
    defaults = {"g_d": 1.0, "g_r": 1.0, "lambda": 1.0, "sigma": 1.0, "gate": 0.0, "overflow_scale": 1.0}
    defaults.update(gates)
    return EmbeddingTables(demo_table=demo, role_table=role, type_table=type_rows, gates=defaults)


class TestDecompose:
    def test_origin(self):
        idx = decompose(0)
        assert (idx.m, idx.r) == (0, 0)

    def test_p_seven(self):
        idx = decompose(7)
        assert (idx.m, idx.r) == (2, 1)

    def test_largest_trained_flat_index(self):
        # with five demos plus the query, flat indices run 0..17
        idx = decompose(17)
        assert (idx.m, idx.r) == (5, 2)

    def test_reconstruction_identity(self):
        for p in range(200):
            idx = decompose(p)
            assert 3 * idx.m + idx.r == p
            assert idx.r in (0, 1, 2)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            decompose(-1)


class TestRescaleGlobal:
    def test_within_trained_batch_is_identity(self):
        assert rescale_global(3, 4, 5) == 3.0

    def test_batch_maximum_lands_on_m_train(self):
        assert rescale_global(10, 10, 5) == 5.0

    def test_interior_point(self):
        assert rescale_global(7, 10, 5) == 3.5

    def test_output_bounded_by_m_train(self):
        for m_max in (5, 8, 20, 1000):
            for m in grid(m_max, 0.5):
                assert rescale_global(m, m_max, 5) <= 5.0 + 1e-12


class TestCompressSqrt:
    def test_boundary_is_identity(self):
        assert compress_sqrt(5, PARAMS) == 5.0

    def test_overflow_value(self):
        assert compress_sqrt(9, PARAMS) == 7.0

    def test_sublinear_gap(self):
        gap = compress_sqrt(7, PARAMS) - compress_sqrt(6, PARAMS)
        assert gap == pytest.approx(math.sqrt(2) - 1, abs=1e-12)
        assert gap < 1.0


class TestCompressLog1p:
    def test_in_range_identity(self):
        for m in grid(5.0):
            assert compress_log1p(m, PARAMS) == m

    def test_overflow_value(self):
        params = CompressionParams(m_train=5, alpha=2.0)
        assert compress_log1p(7, params) == pytest.approx(5 + 2 * math.log(2), abs=1e-12)

    def test_unit_slope_at_the_join(self):
        # finite-difference derivative oracle at overflow zero
        params = CompressionParams(m_train=5, alpha=2.0)
        h = 1e-6
        slope = (compress_log1p(5 + h, params) - compress_log1p(5.0, params)) / h
        assert slope == pytest.approx(1.0, abs=1e-6)

    def test_strictly_increasing(self):
        values = [compress_log1p(m, PARAMS) for m in grid(40.0, 0.25)]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestCompressTanh:
    def test_in_range_identity_up_to_m_train_minus_one(self):
        assert compress_tanh(4, PARAMS) == 4.0

    def test_overflow_value(self):
        assert compress_tanh(7, PARAMS) == pytest.approx(4 + 2 * math.tanh(1.0), abs=1e-12)
        assert compress_tanh(7, PARAMS) == pytest.approx(5.523188, abs=1e-6)

    def test_bounded_even_at_huge_overflow(self):
        assert compress_tanh(1e6, PARAMS) < 6.0

    def test_anchor_pins_furthest_demo_to_m_train(self):
        params = CompressionParams(m_train=5, delta=2.0, tau=3.0, anchor_max=True)
        assert compress_tanh(9, params, sequence_max_m=9) == 5.0
        assert compress_tanh(7, params, sequence_max_m=9) != 5.0

    def test_anchor_ignores_in_range_maxima(self):
        params = CompressionParams(m_train=5, anchor_max=True)
        assert compress_tanh(3, params, sequence_max_m=3) == 3.0


class TestCompressLinearClamp:
    def test_boundary_identity(self):
        assert compress_linear_clamp(5, PARAMS) == 5.0

    def test_half_slope_beyond(self):
        assert compress_linear_clamp(7, PARAMS) == 6.0
        assert compress_linear_clamp(10, PARAMS) == 7.5


# every compression map: exact in-range identity, no jump at the join
# (the join gap must not exceed the map's modulus of continuity at eps),
# and monotone growth over [0, 100]
IDENTITY_MAPS = {
    "sqrt": (lambda m: compress_sqrt(m, PARAMS), 5.0),
    "log1p": (lambda m: compress_log1p(m, PARAMS), 5.0),
    "tanh": (lambda m: compress_tanh(m, PARAMS), 4.0),
    "linear": (lambda m: compress_linear_clamp(m, PARAMS), 5.0),
    "rescale-degenerate": (lambda m: rescale_global(m, 4.0, 5), 20.0),
}

JOIN_MAPS = {
    "sqrt": (
        lambda m: compress_sqrt(m, PARAMS),
        5.0,
        lambda eps: PARAMS.alpha * math.sqrt(eps),
    ),
    "log1p": (lambda m: compress_log1p(m, PARAMS), 5.0, lambda eps: eps),
    "tanh": (
        lambda m: compress_tanh(m, PARAMS),
        4.0,
        lambda eps: PARAMS.delta / PARAMS.tau * eps,
    ),
    "linear": (lambda m: compress_linear_clamp(m, PARAMS), 5.0, lambda eps: eps),
}

MONOTONE_MAPS = {
    **{name: fn_boundary[0] for name, fn_boundary in IDENTITY_MAPS.items()},
    "rescale-extrapolating": lambda m: rescale_global(m, 50.0, 5),
}


@pytest.mark.parametrize("name", sorted(IDENTITY_MAPS))
def test_compression_in_range_identity_exact(name):
    fn, boundary = IDENTITY_MAPS[name]
    for m in grid(boundary):
        assert fn(m) == m


@pytest.mark.parametrize("name", sorted(JOIN_MAPS))
def test_compression_continuous_at_the_boundary(name):
    fn, boundary, modulus = JOIN_MAPS[name]
    eps = 1e-7
    jump = abs(fn(boundary + eps) - fn(boundary - eps))
    assert jump <= modulus(eps) + eps + 1e-9
    # both branch values agree at the boundary itself
    assert fn(boundary) == pytest.approx(boundary, abs=1e-9)


@pytest.mark.parametrize("name", sorted(MONOTONE_MAPS))
def test_compression_monotone_over_the_grid(name):
    fn = MONOTONE_MAPS[name]
    values = [fn(m) for m in grid(100.0)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_tanh_outputs_stay_below_span_bound():
    bound = PARAMS.m_train - 1 + PARAMS.delta
    for m in grid(100.0, 0.5) + [1e4, 1e8]:
        assert compress_tanh(m, PARAMS) < bound


class TestLerpLookup:
    def test_integer_coordinate_returns_exact_row(self):
        tables = make_tables()
        assert lerp_lookup(tables.demo_table, 3.0) == tables.demo_table[3]

    def test_midpoint_of_known_rows(self):
        demo = [[0.0, 0.0]] * 2 + [[0.0, 0.0], [1.0, 1.0]] + [[0.0, 0.0]] * 2
        assert lerp_lookup(demo, 2.5) == [0.5, 0.5]

    def test_upper_boundary_exercises_ceil_clamp(self):
        tables = make_tables()
        assert lerp_lookup(tables.demo_table, 5.0) == tables.demo_table[5]

    def test_out_of_range_rejected(self):
        tables = make_tables()
        with pytest.raises(ValueError):
            lerp_lookup(tables.demo_table, 5.5)
        with pytest.raises(ValueError):
            lerp_lookup(tables.demo_table, -0.5)

    def test_convexity_stays_within_bracketing_rows(self):
        tables = make_tables()
        for m in grid(5.0, 0.01):
            vec = lerp_lookup(tables.demo_table, m)
            lo, hi = tables.demo_table[int(m)], tables.demo_table[min(int(m) + 1, 5)]
            for x, a, b in zip(vec, lo, hi):
                assert min(a, b) - 1e-12 <= x <= max(a, b) + 1e-12


class TestSinusoidEncode:
    def test_zero_coordinate_alternates_zero_one(self):
        assert sinusoid_encode(0.0, 8) == [0.0, 1.0] * 4

    def test_pair_norms_are_one(self):
        for coord in (0.3, 1.7, 42.0):
            vec = sinusoid_encode(coord, 16)
            for i in range(0, 16, 2):
                assert vec[i] ** 2 + vec[i + 1] ** 2 == pytest.approx(1.0, abs=1e-12)

    def test_unit_coordinate_two_dims(self):
        vec = sinusoid_encode(1.0, 2, base=10000.0)
        assert vec[0] == pytest.approx(0.8414709848078965, abs=1e-15)
        assert vec[1] == pytest.approx(0.5403023058681398, abs=1e-15)

    def test_components_in_unit_interval(self):
        vec = sinusoid_encode(123.456, 12)
        assert all(-1.0 <= x <= 1.0 for x in vec)

    def test_odd_dimension_rejected(self):
        with pytest.raises(ValueError):
            sinusoid_encode(1.0, 3)


class TestInterpolatedDemo:
    def test_trained_range_is_exact_table_sum(self):
        tables = make_tables()
        for p in range(18):
            idx = decompose(p)
            vec = pe_interpolated_demo(p, m_max=5.0, tables=tables, params=PARAMS)
            expected = [
                a + b
                for a, b in zip(tables.role_table[idx.r], tables.demo_table[idx.m])
            ]
            assert vec == expected

    def test_role_difference_is_exactly_the_role_row_difference(self):
        tables = make_tables()
        v1 = pe_interpolated_demo(12, 8.0, tables, PARAMS)  # m=4, r=0
        v2 = pe_interpolated_demo(13, 8.0, tables, PARAMS)  # m=4, r=1
        diff = [a - b for a, b in zip(v1, v2)]
        expected = [a - b for a, b in zip(tables.role_table[0], tables.role_table[1])]
        assert diff == pytest.approx(expected, abs=1e-12)

    def test_far_position_rescales_to_the_last_row(self):
        tables = make_tables()
        vec = pe_interpolated_demo(30, m_max=10.0, tables=tables, params=PARAMS)
        expected = [a + b for a, b in zip(tables.role_table[0], tables.demo_table[5])]
        assert vec == pytest.approx(expected, abs=1e-12)


class TestStructuredFunction:
    def test_gate_off_reduces_to_interpolated_demo_with_type_rows(self):
        tables = make_tables(**{"lambda": 0.0})
        swapped = make_tables()
        swapped.role_table = swapped.type_table
        for p in (0, 4, 11, 17):
            vec = pe_structured_function(p, 5.0, tables, PARAMS, local_offset=3)
            expected = pe_interpolated_demo(p, 5.0, swapped, PARAMS)
            assert vec == pytest.approx(expected, abs=1e-15)

    def test_zero_offset_contributes_scaled_alternating_vector(self):
        lam = 0.25
        tables = make_tables(**{"lambda": lam})
        with_offset = pe_structured_function(6, 5.0, tables, PARAMS, local_offset=0)
        base = pe_structured_function(6, 5.0, make_tables(**{"lambda": 0.0}), PARAMS, 0)
        contribution = [a - b for a, b in zip(with_offset, base)]
        assert contribution == pytest.approx([0.0, lam] * (D // 2), abs=1e-15)

    def test_composition_equals_sum_of_parts(self):
        tables = make_tables(**{"lambda": 0.7})
        p, m_max, offset = 19, 8.0, 2
        idx = decompose(p)
        demo = lerp_lookup(tables.demo_table, rescale_global(idx.m, m_max, 5))
        sin = sinusoid_encode(float(offset), D, PARAMS.sinusoid_base)
        expected = [
            d + t + 0.7 * s
            for d, t, s in zip(demo, tables.type_table[idx.r], sin)
        ]
        vec = pe_structured_function(p, m_max, tables, PARAMS, offset)
        assert vec == pytest.approx(expected, abs=1e-12)

    def test_missing_type_table_rejected(self):
        tables = make_tables()
        tables.type_table = None
        with pytest.raises(ValueError):
            pe_structured_function(0, 5.0, tables, PARAMS, 0)


class TestOverflowGated:
    def test_in_range_equals_base_path_with_constant_offset(self):
        # at zero overflow the residual is the constant (0,1,0,1,...) vector,
        # gated; the composition keeps that offset by design
        tables = make_tables(gate=0.3, overflow_scale=0.5)
        gate = 1.0 / (1.0 + math.exp(-0.3))
        for p in range(15):
            idx = decompose(p)
            vec = pe_overflow_gated(p, 4.0, tables, PARAMS)
            residual = [0.0, gate * 0.5] * (D // 2)
            expected = [
                d + r + c
                for d, r, c in zip(
                    tables.demo_table[idx.m], tables.role_table[idx.r], residual
                )
            ]
            assert vec == pytest.approx(expected, abs=1e-12)

    def test_strongly_negative_gate_removes_the_residual(self):
        tables = make_tables(gate=-1000.0, overflow_scale=2.0)
        for p in (2, 8, 21):
            vec = pe_overflow_gated(p, 8.0, tables, PARAMS)
            idx = decompose(p)
            base = lerp_lookup(tables.demo_table, rescale_global(idx.m, 8.0, 5))
            expected = [a + b for a, b in zip(base, tables.role_table[idx.r])]
            assert vec == pytest.approx(expected, abs=1e-15)

    def test_overflow_changes_only_the_sinusoid_argument(self):
        tables = make_tables(gate=0.0, overflow_scale=1.0)
        vec_over = pe_overflow_gated(21, 7.0, tables, PARAMS)  # m=7, overflow 2
        idx = decompose(21)
        base = lerp_lookup(tables.demo_table, rescale_global(idx.m, 7.0, 5))
        expected_residual = sinusoid_encode(2.0, D, PARAMS.sinusoid_base)
        expected = [
            b + r + 0.5 * s
            for b, r, s in zip(base, tables.role_table[idx.r], expected_residual)
        ]
        assert vec_over == pytest.approx(expected, abs=1e-12)


class TestStructuredDemoRole:
    def test_demo_gate_off_is_pure_role(self):
        tables = make_tables(g_d=0.0, g_r=2.0)
        for p in (0, 7, 23):
            idx = decompose(p)
            vec = pe_structured_demo_role(p, tables, PARAMS, flavor="sqrt")
            assert vec == pytest.approx(
                [2.0 * x for x in tables.role_table[idx.r]], abs=1e-15
            )

    def test_role_gate_off_in_range_is_pure_sinusoid(self):
        tables = make_tables(g_d=1.5, g_r=0.0)
        vec = pe_structured_demo_role(9, tables, PARAMS, flavor="sqrt")  # m=3
        assert vec == pytest.approx(
            [1.5 * x for x in sinusoid_encode(3.0, D, PARAMS.sinusoid_base)], abs=1e-15
        )

    def test_sqrt_flavor_compresses_the_argument(self):
        tables = make_tables(g_d=1.0, g_r=0.0)
        vec = pe_structured_demo_role(27, tables, PARAMS, flavor="sqrt")  # m=9 -> 7.0
        assert vec == pytest.approx(sinusoid_encode(7.0, D, PARAMS.sinusoid_base), abs=1e-15)

    def test_linear_flavor_uses_the_clamp(self):
        tables = make_tables(g_d=1.0, g_r=0.0)
        vec = pe_structured_demo_role(21, tables, PARAMS, flavor="linear")  # m=7 -> 6.0
        assert vec == pytest.approx(sinusoid_encode(6.0, D, PARAMS.sinusoid_base), abs=1e-15)

    def test_unknown_flavor_rejected(self):
        with pytest.raises(ValueError):
            pe_structured_demo_role(0, make_tables(), PARAMS, flavor="cubic")

    def test_role_difference_matches_gated_role_rows(self):
        tables = make_tables(g_d=1.0, g_r=3.0)
        for flavor in ("sqrt", "tanh", "linear"):
            v1 = pe_structured_demo_role(24, tables, PARAMS, flavor)  # m=8, r=0
            v2 = pe_structured_demo_role(26, tables, PARAMS, flavor)  # m=8, r=2
            diff = [a - b for a, b in zip(v1, v2)]
            expected = [
                3.0 * (a - b)
                for a, b in zip(tables.role_table[0], tables.role_table[2])
            ]
            assert diff == pytest.approx(expected, abs=1e-12)


class TestRoleOnly:
    def test_period_three_in_flat_position(self):
        tables = make_tables(**{"lambda": 1.3})
        for p in range(30):
            assert pe_role_only(p, tables, PARAMS) == pe_role_only(p + 3, tables, PARAMS)

    def test_zero_gate_gives_zero_vector(self):
        tables = make_tables(**{"lambda": 0.0})
        assert pe_role_only(5, tables, PARAMS) == [0.0] * D

    def test_gate_doubling_doubles_the_output(self):
        t1 = make_tables(**{"lambda": 1.0})
        t2 = make_tables(**{"lambda": 2.0})
        for p in range(6):
            doubled = [2.0 * x for x in pe_role_only(p, t1, PARAMS)]
            assert pe_role_only(p, t2, PARAMS) == doubled


class TestVanilla:
    def test_trained_flat_index_is_defined(self):
        table = [[float(i)] * 2 for i in range(100)]
        assert pe_vanilla(17, table) == [17.0, 17.0]

    def test_first_row(self):
        table = [[float(i)] * 2 for i in range(100)]
        assert pe_vanilla(0, table) == [0.0, 0.0]

    def test_position_beyond_table_is_the_failure_mode(self):
        table = [[0.0] * 2 for _ in range(100)]
        with pytest.raises(ValueError, match="outside"):
            pe_vanilla(100, table)

    def test_coverage_utility_flags_untouched_rows(self):
        # a pass with five examples plus the query touches rows 0..17
        rows = untrained_rows(100, trained_example_count=5)
        assert rows == list(range(18, 100))
        assert untrained_rows(12, 5) == []


class TestLocalOffsets:
    def test_counts_repeated_occurrences(self):
        assert local_offsets([5, 5, 7, 5]) == [0, 1, 0, 2]

    def test_all_distinct_positions_have_zero_offset(self):
        assert local_offsets([1, 2, 3]) == [0, 0, 0]
