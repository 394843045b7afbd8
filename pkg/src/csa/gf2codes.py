"""Small binary linear block codes: rank, weight enumerator, information
functions, MAP erasure decoding and per-code EXIT functions.

Bit conventions: a generator row is an int whose bit ``j`` is the entry in
column ``j``; a column is an int whose bit ``i`` is the entry in row ``i``.
The text form ``"1100,0111"`` lists rows left to right, column 0 first.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations
from math import comb
from typing import Mapping, Sequence

import numpy as np

MAX_LENGTH = 64
MAX_ENUM_DIMENSION = 24
# subspace lattice of GF(2)^k is used for information functions up to this k
_LATTICE_MAX_K = 6


class CodeError(ValueError):
    """Invalid generator matrix or unsupported code size."""


def rank(rows: Sequence[int]) -> int:
    """GF(2) rank of a matrix given as int bit rows."""
    if len(rows) == 0:
        raise CodeError("matrix must be non-empty")
    basis: list[int] = []
    for r in rows:
        for b in basis:
            r = min(r, r ^ b)
        if r:
            basis.append(r)
    return len(basis)


def parse_generator(text: str) -> tuple[int, list[int]]:
    """Parse ``"1100,0111"`` into ``(n, rows)``."""
    parts = [p.strip() for p in text.replace(";", ",").split(",") if p.strip()]
    if not parts:
        raise CodeError("empty generator matrix")
    n = len(parts[0])
    rows = []
    for p in parts:
        if len(p) != n or set(p) - {"0", "1"}:
            raise CodeError(f"bad generator row {p!r}")
        rows.append(sum(1 << j for j, ch in enumerate(p) if ch == "1"))
    return n, rows


def format_generator(n: int, rows: Sequence[int]) -> str:
    return ",".join("".join("1" if (r >> j) & 1 else "0" for j in range(n)) for r in rows)


def rows_to_columns(n: int, rows: Sequence[int]) -> tuple[int, ...]:
    return tuple(
        sum(((r >> j) & 1) << i for i, r in enumerate(rows)) for j in range(n)
    )


@lru_cache(maxsize=None)
def subspaces(k: int) -> tuple[tuple[int, int], ...]:
    """All subspaces of GF(2)^k as ``(membership mask, dimension)``.

    The membership mask has bit ``v`` set when vector ``v`` lies in the
    subspace.
    """
    if k > _LATTICE_MAX_K:
        raise CodeError(f"subspace lattice not tabulated for k={k}")
    found = {1: 0}
    frontier = [1]
    while frontier:
        nxt = []
        for mask in frontier:
            members = [v for v in range(1 << k) if (mask >> v) & 1]
            for w in range(1, 1 << k):
                if (mask >> w) & 1:
                    continue
                new = mask
                for v in members:
                    new |= 1 << (v ^ w)
                if new not in found:
                    found[new] = found[mask] + 1
                    nxt.append(new)
        frontier = nxt
    return tuple(sorted(found.items(), key=lambda kv: (kv[1], kv[0])))


def _mobius_weight(k: int, dim: int) -> int:
    # sum over V >= W of mu(W, V) * dim(V); depends only on codim m = k - dim
    m = k - dim
    if m == 0:
        return k
    w = 1
    for i in range(1, m):
        w *= (1 << i) - 1
    return -w if m % 2 else w


def information_functions_from_counts(k: int, counts: Sequence[int]) -> list[int]:
    """Un-normalized information functions from column-type counts.

    ``counts[v]`` is the number of columns equal to the nonzero vector ``v``.
    Summing rank over all g-column subsets is rewritten, by Mobius inversion
    on the subspace lattice, as a signed sum of ``C(n_W, g)`` where ``n_W``
    counts the columns inside subspace ``W``.
    """
    n = sum(counts)
    out = [0] * (n + 1)
    for mask, dim in subspaces(k):
        n_w = sum(c for v, c in enumerate(counts) if c and (mask >> v) & 1)
        w = _mobius_weight(k, dim)
        for g in range(n_w + 1):
            out[g] += w * comb(n_w, g)
    return out


def information_functions_exhaustive(k: int, columns: Sequence[int]) -> list[int]:
    """Sum of ranks over every column subset, by direct enumeration."""
    n = len(columns)
    out = [0] * (n + 1)
    for g in range(1, n + 1):
        out[g] = sum(rank(list(sel)) for sel in combinations(columns, g))
    return out


@dataclass(frozen=True)
class BinaryLinearCode:
    """An (n, k) binary linear code given by a full-rank generator matrix."""

    n: int
    rows: tuple[int, ...]

    def __post_init__(self) -> None:
        if not 1 <= self.n <= MAX_LENGTH:
            raise CodeError(f"length {self.n} outside 1..{MAX_LENGTH}")
        if not self.rows:
            raise CodeError("generator has no rows")
        if any(r >> self.n for r in self.rows):
            raise CodeError("row wider than code length")
        if rank(list(self.rows)) != len(self.rows):
            raise CodeError("generator is rank deficient")
        if any(c == 0 for c in self.columns):
            raise CodeError("generator has an all-zero column (idle symbol)")

    @classmethod
    def from_string(cls, text: str) -> "BinaryLinearCode":
        n, rows = parse_generator(text)
        return cls(n, tuple(rows))

    @classmethod
    def repetition(cls, n: int) -> "BinaryLinearCode":
        return cls(n, ((1 << n) - 1,))

    @classmethod
    def spc(cls, k: int) -> "BinaryLinearCode":
        """Systematic (k+1, k) single parity-check code."""
        return cls(k + 1, tuple((1 << i) | (1 << k) for i in range(k)))

    @property
    def k(self) -> int:
        return len(self.rows)

    def __str__(self) -> str:
        return format_generator(self.n, self.rows)

    @cached_property
    def columns(self) -> tuple[int, ...]:
        return rows_to_columns(self.n, self.rows)

    @cached_property
    def column_counts(self) -> tuple[int, ...]:
        counts = [0] * (1 << self.k)
        for c in self.columns:
            counts[c] += 1
        return tuple(counts)

    @cached_property
    def information_functions(self) -> tuple[int, ...]:
        if self.k <= _LATTICE_MAX_K:
            return tuple(information_functions_from_counts(self.k, self.column_counts))
        return tuple(information_functions_exhaustive(self.k, self.columns))

    @cached_property
    def weight_enumerator(self) -> tuple[int, ...]:
        return tuple(weight_enumerator(self))

    @property
    def d_min(self) -> int:
        return next(w for w, b in enumerate(self.weight_enumerator) if w and b)

    @cached_property
    def exit_coefficients(self) -> np.ndarray:
        """``a_t = (n-t) e_{n-t} - (t+1) e_{n-1-t}`` for ``t = 0..n-1``."""
        return exit_coefficients_from_info(self.information_functions)

    def encode(self, info: Sequence[int]) -> list[int]:
        """Encode ``k`` payloads (ints, combined by XOR) into ``n`` segments."""
        out = []
        for col in self.columns:
            acc = 0
            for i, u in enumerate(info):
                if (col >> i) & 1:
                    acc ^= u
            out.append(acc)
        return out


def weight_enumerator(code: BinaryLinearCode) -> list[int]:
    """Codeword counts by Hamming weight, by enumerating all 2^k codewords."""
    if code.k > MAX_ENUM_DIMENSION:
        raise CodeError(f"dimension {code.k} too large for exhaustive enumeration")
    counts = [0] * (code.n + 1)
    # Gray-code walk over messages
    word = 0
    counts[0] = 1
    for i in range(1, 1 << code.k):
        word ^= code.rows[(i & -i).bit_length() - 1]
        counts[word.bit_count()] += 1
    return counts


def information_functions(code: BinaryLinearCode) -> tuple[int, ...]:
    return code.information_functions


def exit_coefficients_from_info(info: Sequence[float]) -> np.ndarray:
    n = len(info) - 1
    return np.array(
        [(n - t) * info[n - t] - (t + 1) * info[n - 1 - t] for t in range(n)],
        dtype=float,
    )


def bernstein_eval(coeffs: np.ndarray, p):
    """Evaluate ``sum_t coeffs[t] p^t (1-p)^(len-1-t)`` (scalar or array p)."""
    m = len(coeffs) - 1
    p = np.asarray(p, dtype=float)
    t = np.arange(m + 1)
    terms = coeffs * p[..., None] ** t * (1.0 - p[..., None]) ** (m - t)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def _check_prob(p) -> None:
    arr = np.asarray(p)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise ValueError("erasure probability must lie in [0, 1]")


def exit_bn(code: BinaryLinearCode, p):
    """MAP extrinsic erasure probability of a burst node using ``code``."""
    _check_prob(p)
    return bernstein_eval(code.exit_coefficients / code.n, p)


def mds_exit_coefficients(n: int, k: int) -> np.ndarray:
    """Bernstein coefficients (times n) of the bounded-distance MDS EXIT."""
    if not 1 <= k < n:
        raise CodeError(f"invalid MDS parameters ({n}, {k})")
    a = np.zeros(n)
    for t in range(n - k, n):
        a[t] = n * comb(n - 1, t)
    return a


def exit_mds(n: int, k: int, p):
    """Bounded-distance EXIT of an (n, k) MDS burst node.

    A segment stays erased unless at least ``k`` of the other ``n-1``
    segments are known.
    """
    if not 1 <= k < n:
        raise CodeError(f"invalid MDS parameters ({n}, {k})")
    _check_prob(p)
    p = np.asarray(p, dtype=float)
    out = sum(comb(n - 1, l) * (1.0 - p) ** l * p ** (n - l - 1) for l in range(k))
    return float(out) if np.ndim(out) == 0 else out


def map_erasure_decode(
    code: BinaryLinearCode, values: Mapping[int, int]
) -> dict[int, int]:
    """Recover every erased segment computable from the known ones.

    ``values`` maps known positions to payloads (ints, XOR-combined). Returns
    the newly recovered ``{position: payload}``; a position is recovered iff
    its generator column lies in the span of the known columns.
    """
    for j in values:
        if not 0 <= j < code.n:
            raise ValueError(f"position {j} outside 0..{code.n - 1}")
    # reduced basis of known columns; each entry tracks the payload combination
    basis: list[tuple[int, int]] = []  # (column vector, payload), keyed by top bit
    for j, payload in values.items():
        vec, pay = code.columns[j], payload
        for bvec, bpay in basis:
            if vec ^ bvec < vec:
                vec ^= bvec
                pay ^= bpay
        if vec:
            basis.append((vec, pay))
            basis.sort(reverse=True)
        elif pay != 0:
            raise AssertionError("inconsistent payloads for known positions")
    recovered = {}
    for j, col in enumerate(code.columns):
        if j in values:
            continue
        vec, pay = col, 0
        for bvec, bpay in basis:
            if vec ^ bvec < vec:
                vec ^= bvec
                pay ^= bpay
        if vec == 0:
            recovered[j] = pay
    return recovered


def solve_information(code: BinaryLinearCode, segments: Mapping[int, int]) -> list[int] | None:
    """Information payloads from known segments, or None if underdetermined."""
    basis: list[tuple[int, int]] = []
    for j, payload in segments.items():
        vec, pay = code.columns[j], payload
        for bvec, bpay in basis:
            if vec ^ bvec < vec:
                vec ^= bvec
                pay ^= bpay
        if vec:
            basis.append((vec, pay))
            basis.sort(reverse=True)
    if len(basis) < code.k:
        return None
    # lowest pivot first, so each vector is already a unit vector when used
    for i in reversed(range(len(basis))):
        vec, pay = basis[i]
        for j2 in range(len(basis)):
            if j2 != i:
                ov, op = basis[j2]
                if (ov >> (vec.bit_length() - 1)) & 1:
                    basis[j2] = (ov ^ vec, op ^ pay)
    info = [0] * code.k
    for vec, pay in basis:
        info[vec.bit_length() - 1] = pay
    return info
