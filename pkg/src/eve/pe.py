"""Positional-encoding coordinate maps and composition rules.

Pure, dependency-free numeric kernels for encodings built on the demo/role
decomposition of a flat token position ``p``: the example index ``m = p // 3``
and the within-example role ``r = p % 3``. Overflow compression maps send
example indices beyond the trained range back toward it; composition rules
combine compressed demo coordinates with learned role/type rows, interpolated
embedding lookups, and sinusoidal signals. Tables are plain nested lists
supplied by the caller; no parameter learning happens here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

Vector = list[float]


@dataclass(frozen=True)
class DemoRoleIndex:
    """Decomposition of a flat position: ``p = 3 * m + r``."""

    p: int
    m: int
    r: int


@dataclass
class CompressionParams:
    """Knobs of the overflow-compression maps.

    ``m_train`` is the largest example index seen during training; ``alpha``
    scales sqrt/log1p extrapolation; ``delta`` and ``tau`` are the tanh
    overflow span and temperature; ``linear_slope`` is the clamp slope;
    ``anchor_max`` pins the furthest in-sequence demo back to ``m_train``.
    """

    m_train: int = 5
    alpha: float = 1.0
    delta: float = 2.0
    tau: float = 3.0
    linear_slope: float = 0.5
    anchor_max: bool = False
    sinusoid_base: float = 10000.0

    def validate(self) -> None:
        if self.m_train < 1:
            raise ValueError("m_train must be >= 1")
        if self.alpha <= 0 or self.delta <= 0 or self.tau <= 0:
            raise ValueError("alpha, delta, tau must be > 0")


@dataclass
class EmbeddingTables:
    """Learned-table fixtures: demo rows, role rows, optional type rows, gates."""

    demo_table: list[Vector]
    role_table: list[Vector]
    type_table: list[Vector] | None = None
    gates: dict[str, float] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.role_table[0])

    def validate(self, m_train: int | None = None) -> None:
        if len(self.role_table) != 3:
            raise ValueError("role_table must have exactly 3 rows")
        if self.type_table is not None and len(self.type_table) != 3:
            raise ValueError("type_table must have exactly 3 rows")
        if m_train is not None and len(self.demo_table) != m_train + 1:
            raise ValueError(
                f"demo_table must have m_train+1 = {m_train + 1} rows, "
                f"got {len(self.demo_table)}"
            )


# ---------------------------------------------------------------------------
# coordinate maps


def decompose(p: int) -> DemoRoleIndex:
    """Split a flat position into example index and within-example role."""
    if p < 0:
        raise ValueError("flat position must be >= 0")
    return DemoRoleIndex(p=p, m=p // 3, r=p % 3)


def rescale_global(m: float, m_max: float, m_train: int) -> float:
    """Rescale all example indices into ``[0, m_train]`` by the batch maximum."""
    if m_max <= m_train:
        return float(m)
    return m * m_train / m_max


def compress_sqrt(m: float, params: CompressionParams) -> float:
    """Identity up to ``m_train``; sublinear sqrt growth beyond it."""
    if m <= params.m_train:
        return float(m)
    return params.m_train + params.alpha * math.sqrt(m - params.m_train)


def compress_log1p(m: float, params: CompressionParams) -> float:
    """Identity up to ``m_train``; log1p overflow with unit slope at the join."""
    if m <= params.m_train:
        return float(m)
    return params.m_train + params.alpha * math.log1p((m - params.m_train) / params.alpha)


def compress_tanh(
    m: float, params: CompressionParams, sequence_max_m: float | None = None
) -> float:
    """Identity up to ``m_train - 1``; bounded tanh overflow beyond it.

    Output stays below ``m_train - 1 + delta``. With ``anchor_max`` set, the
    furthest demo of the current sequence is pinned to exactly ``m_train``.
    """
    boundary = params.m_train - 1
    if (
        params.anchor_max
        and sequence_max_m is not None
        and m == sequence_max_m
        and m > boundary
    ):
        return float(params.m_train)
    if m <= boundary:
        return float(m)
    value = boundary + params.delta * math.tanh((m - boundary) / params.tau)
    # tanh saturates in floats for large arguments; keep the output strictly
    # inside the documented [boundary, boundary + delta) span
    span_end = boundary + params.delta
    if value >= span_end:
        value = math.nextafter(span_end, boundary)
    return value


def compress_linear_clamp(m: float, params: CompressionParams) -> float:
    """Identity up to ``m_train``; fixed-slope linear growth beyond it."""
    if m <= params.m_train:
        return float(m)
    return params.m_train + params.linear_slope * (m - params.m_train)


# ---------------------------------------------------------------------------
# table lookups and signals


def lerp_lookup(demo_table: Sequence[Vector], m_tilde: float) -> Vector:
    """Linearly interpolate adjacent demo-table rows at a fractional coordinate.

    The upper row index is clamped to the last row, so ``m_tilde == m_train``
    returns that row exactly.
    """
    m_train = len(demo_table) - 1
    if m_tilde < -1e-9 or m_tilde > m_train + 1e-9:
        raise ValueError(f"coordinate {m_tilde} outside [0, {m_train}]")
    m_tilde = min(max(m_tilde, 0.0), float(m_train))
    lo = int(math.floor(m_tilde))
    hi = min(lo + 1, m_train)
    f = m_tilde - lo
    row_lo, row_hi = demo_table[lo], demo_table[hi]
    return [(1.0 - f) * a + f * b for a, b in zip(row_lo, row_hi)]


def sinusoid_encode(coord: float, d: int, base: float = 10000.0) -> Vector:
    """Interleaved sin/cos pairs over the standard geometric frequency ladder."""
    if d <= 0 or d % 2 != 0:
        raise ValueError("encoding dimension must be a positive even integer")
    out: Vector = []
    for i in range(d // 2):
        angle = coord / base ** (2 * i / d)
        out.append(math.sin(angle))
        out.append(math.cos(angle))
    return out


def local_offsets(positions: Sequence[int]) -> list[int]:
    """Offset of each flat index within its run of repeats (0 for first use)."""
    seen: dict[int, int] = {}
    out = []
    for p in positions:
        out.append(seen.get(p, 0))
        seen[p] = seen.get(p, 0) + 1
    return out


def untrained_rows(table_size: int, trained_example_count: int) -> list[int]:
    """Rows of a flat position table never touched by a k-example training pass.

    A pass with k examples plus the query touches flat indices
    ``0 .. 3*(k+1) - 1``; everything beyond is an untrained row.
    """
    touched = 3 * (trained_example_count + 1)
    return list(range(min(touched, table_size), table_size))


# ---------------------------------------------------------------------------
# vector helpers


def _vadd(*vecs: Vector) -> Vector:
    out = [0.0] * len(vecs[0])
    for v in vecs:
        for i, x in enumerate(v):
            out[i] += x
    return out


def _vscale(c: float, v: Vector) -> Vector:
    return [c * x for x in v]


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


# ---------------------------------------------------------------------------
# composed encodings


def pe_vanilla(p: int, table: Sequence[Vector]) -> Vector:
    """Flat learned lookup; positions beyond the table are a hard error."""
    if p < 0 or p >= len(table):
        raise ValueError(f"position {p} outside the learned table of size {len(table)}")
    return list(table[p])


def pe_role_only(p: int, tables: EmbeddingTables, params: CompressionParams) -> Vector:
    """Role embedding scaled by a single gate; ignores the example axis."""
    tables.validate()
    lam = tables.gates["lambda"]
    return _vscale(lam, tables.role_table[decompose(p).r])


def pe_interpolated_demo(
    p: int, m_max: float, tables: EmbeddingTables, params: CompressionParams
) -> Vector:
    """Role row plus demo-table interpolation at the globally rescaled index."""
    tables.validate(params.m_train)
    idx = decompose(p)
    m_tilde = rescale_global(idx.m, m_max, params.m_train)
    return _vadd(tables.role_table[idx.r], lerp_lookup(tables.demo_table, m_tilde))


def pe_structured_function(
    p: int,
    m_max: float,
    tables: EmbeddingTables,
    params: CompressionParams,
    local_offset: int,
) -> Vector:
    """Interpolated demo row plus type row plus gated local-offset sinusoid."""
    tables.validate(params.m_train)
    if tables.type_table is None:
        raise ValueError("structured-function encoding needs a type_table")
    idx = decompose(p)
    m_tilde = rescale_global(idx.m, m_max, params.m_train)
    demo = lerp_lookup(tables.demo_table, m_tilde)
    lam = tables.gates["lambda"]
    local = _vscale(lam, sinusoid_encode(float(local_offset), tables.dim, params.sinusoid_base))
    return _vadd(demo, tables.type_table[idx.r], local)


def pe_overflow_gated(
    p: int, m_max: float, tables: EmbeddingTables, params: CompressionParams
) -> Vector:
    """Interpolation backbone plus a gated sinusoidal residual of the overflow.

    The residual argument is ``max(m - m_train, 0)``; at zero overflow its
    cos components are still 1, so a constant gated offset is present even in
    range. The composition is kept in exactly that shape rather than zeroing
    the in-range residual.
    """
    tables.validate(params.m_train)
    idx = decompose(p)
    m_tilde = rescale_global(idx.m, m_max, params.m_train)
    base = lerp_lookup(tables.demo_table, m_tilde)
    overflow = float(max(idx.m - params.m_train, 0))
    gate = _sigmoid(tables.gates["gate"])
    scale = tables.gates["overflow_scale"]
    residual = _vscale(
        gate * scale, sinusoid_encode(overflow, tables.dim, params.sinusoid_base)
    )
    return _vadd(base, tables.role_table[idx.r], residual)


def pe_structured_demo_role(
    p: int,
    tables: EmbeddingTables,
    params: CompressionParams,
    flavor: str = "sqrt",
    sequence_max_m: float | None = None,
) -> Vector:
    """Gated sum of a compressed-demo sinusoid and the role row.

    ``flavor`` picks the overflow compression: ``sqrt``, ``tanh``, or
    ``linear`` (fixed-slope clamp).
    """
    tables.validate()
    idx = decompose(p)
    if flavor == "sqrt":
        m_tilde = compress_sqrt(idx.m, params)
    elif flavor == "tanh":
        m_tilde = compress_tanh(idx.m, params, sequence_max_m)
    elif flavor == "linear":
        m_tilde = compress_linear_clamp(idx.m, params)
    else:
        raise ValueError(f"unknown compression flavor {flavor!r}")
    g_d = tables.gates["g_d"]
    g_r = tables.gates["g_r"]
    demo = _vscale(g_d, sinusoid_encode(m_tilde, tables.dim, params.sinusoid_base))
    role = _vscale(g_r, tables.role_table[idx.r])
    return _vadd(demo, role)
