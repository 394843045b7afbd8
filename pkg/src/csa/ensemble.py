"""Component-code distributions and random-code ensemble expectations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from .gf2codes import (
    BinaryLinearCode,
    CodeError,
    exit_coefficients_from_info,
    information_functions_from_counts,
    mds_exit_coefficients,
    _mobius_weight,
    subspaces,
)

PROB_TOL = 1e-9
ENUM_MAX_BITS = 24


class DistributionError(ValueError):
    """Invalid component distribution."""


class EnsembleSizeError(DistributionError):
    """Exact enumeration requested beyond the size cap; sample instead."""


@dataclass(frozen=True)
class EnsembleExpectation:
    """Expectations over uniformly drawn admissible k x n generator matrices."""

    n: int
    k: int
    info: tuple[float, ...]
    b2: float
    members: int
    exact: bool
    info_stderr: tuple[float, ...] | None = None
    b2_stderr: float | None = None

    @cached_property
    def exit_coefficients(self) -> np.ndarray:
        return exit_coefficients_from_info(self.info)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "k": self.k,
            "exact": self.exact,
            "members": self.members,
            "info": list(self.info),
            "info_stderr": None if self.info_stderr is None else list(self.info_stderr),
            "b2": self.b2,
            "b2_stderr": self.b2_stderr,
        }


@lru_cache(maxsize=None)
def _lattice_tables(k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Membership table, Mobius weights and hyperplane rows for GF(2)^k."""
    subs = subspaces(k)
    member = np.array(
        [[(mask >> v) & 1 for v in range(1 << k)] for mask, _ in subs], dtype=np.int64
    )
    weights = np.array([_mobius_weight(k, dim) for _, dim in subs], dtype=np.int64)
    hyper = np.array([i for i, (_, dim) in enumerate(subs) if dim == k - 1])
    return member, weights, hyper


def _admissible_counts(k: int, counts: Sequence[int]) -> bool:
    # zero column excluded; rank k and d_min >= 2 both hold iff every
    # hyperplane misses at least two columns
    if counts[0]:
        return False
    n = sum(counts)
    member, _, hyper = _lattice_tables(k)
    for h in hyper:
        if sum(c for v, c in enumerate(counts) if member[h, v]) > n - 2:
            return False
    return True


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_random_ensemble(
    n: int, k: int, max_bits: int | None = ENUM_MAX_BITS
) -> EnsembleExpectation:
    """Exact expectations over all admissible k x n binary matrices.

    Every matrix is accounted for: matrices are grouped by how many columns
    take each nonzero value, each group weighted by its multinomial size.
    ``max_bits`` caps ``k*n``; pass ``None`` to lift the cap.
    """
    if not 1 <= k < n:
        raise DistributionError(f"invalid ensemble ({n}, {k})")
    if max_bits is not None and k * n > max_bits:
        raise EnsembleSizeError(
            f"k*n = {k * n} exceeds {max_bits}; use sample_random_ensemble"
        )
    n_types = (1 << k) - 1
    fact = [math.factorial(i) for i in range(n + 1)]
    info_sum = [0] * (n + 1)
    members = 0
    for comp in _compositions(n, n_types):
        counts = (0,) + comp
        if not _admissible_counts(k, counts):
            continue
        mult = fact[n]
        for c in comp:
            mult //= fact[c]
        info = information_functions_from_counts(k, counts)
        members += mult
        for g in range(n + 1):
            info_sum[g] += mult * info[g]
    if members == 0:
        raise DistributionError(f"no admissible ({n}, {k}) generator matrix")
    info_mean = tuple(s / members for s in info_sum)
    b2 = k * math.comb(n, 2) - info_mean[n - 2]
    return EnsembleExpectation(n, k, info_mean, b2, members, True)


def _sample_admissible_columns(
    n: int, k: int, count: int, rng: np.random.Generator, max_draws: int
) -> np.ndarray:
    member, _, hyper = _lattice_tables(k)
    kept = []
    have = 0
    drawn = 0
    batch = max(256, min(20000, 2 * count))
    while have < count:
        if drawn >= max_draws:
            raise DistributionError(
                f"rejection sampling for ({n}, {k}) found {have} of {count} "
                f"admissible matrices in {drawn} draws"
            )
        cols = rng.integers(0, 1 << k, size=(batch, n))
        drawn += batch
        ok = (cols != 0).all(axis=1)
        n_h = member[hyper][:, cols].sum(axis=2)  # (hyperplanes, batch)
        ok &= (n_h <= n - 2).all(axis=0)
        kept.append(cols[ok])
        have += int(ok.sum())
    return np.concatenate(kept)[:count]


def sample_random_ensemble(
    n: int,
    k: int,
    samples: int,
    seed: int | None = 0,
    max_draws: int | None = None,
) -> EnsembleExpectation:
    """Monte Carlo expectations with standard errors, by rejection sampling."""
    if samples < 1:
        raise DistributionError("samples must be >= 1")
    if not 1 <= k < n:
        raise DistributionError(f"invalid ensemble ({n}, {k})")
    rng = np.random.default_rng(seed)
    if max_draws is None:
        max_draws = 1000 * samples + 100000
    cols = _sample_admissible_columns(n, k, samples, rng, max_draws)
    member, weights, _ = _lattice_tables(k)
    binom = np.array(
        [[math.comb(m, g) for g in range(n + 1)] for m in range(n + 1)], dtype=np.float64
    )
    total = np.zeros(n + 1)
    total_sq = np.zeros(n + 1)
    for start in range(0, samples, 5000):
        chunk = cols[start : start + 5000]
        n_w = member[:, chunk].sum(axis=2).T  # (batch, subspaces)
        info = np.einsum("s,bsg->bg", weights.astype(np.float64), binom[n_w])
        total += info.sum(axis=0)
        total_sq += (info**2).sum(axis=0)
    mean = total / samples
    var = np.maximum(total_sq / samples - mean**2, 0.0)
    se = np.sqrt(var / max(samples - 1, 1))
    b2 = k * math.comb(n, 2) - mean[n - 2]
    return EnsembleExpectation(
        n, k, tuple(mean.tolist()), float(b2), samples, False,
        info_stderr=tuple(se.tolist()), b2_stderr=float(se[n - 2]),
    )


def draw_admissible_code(n: int, k: int, rng: np.random.Generator) -> BinaryLinearCode:
    """One uniformly drawn member of the admissible (n, k) matrix set."""
    cols = _sample_admissible_columns(n, k, 1, rng, 10**6)[0]
    rows = tuple(
        sum(((int(c) >> i) & 1) << j for j, c in enumerate(cols)) for i in range(k)
    )
    return BinaryLinearCode(n, rows)


@lru_cache(maxsize=None)
def _exact_expectation(n: int, k: int) -> EnsembleExpectation:
    return enumerate_random_ensemble(n, k)


KINDS = ("explicit", "random", "mds", "rep")


@dataclass(frozen=True)
class ComponentSpec:
    """One component code (or code ensemble) with its selection probability."""

    kind: str
    probability: float
    n: int
    k: int
    code: BinaryLinearCode | None = None
    expectation: EnsembleExpectation | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DistributionError(f"unknown component kind {self.kind!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise DistributionError(f"probability {self.probability} outside [0, 1]")
        if self.kind == "explicit":
            if self.code is None:
                raise DistributionError("explicit component needs a code")
            if self.code.d_min < 2:
                raise DistributionError(
                    f"code {self.code} has minimum distance {self.code.d_min} < 2"
                )
        elif self.kind == "mds":
            if not 1 <= self.k < self.n:
                raise DistributionError(f"invalid MDS parameters ({self.n}, {self.k})")
        elif self.kind == "rep":
            if self.k != 1 or self.n < 1:
                raise DistributionError("repetition codes have k = 1 and n >= 1")
        elif self.kind == "random":
            if not 1 <= self.k < self.n:
                raise DistributionError(f"invalid ensemble ({self.n}, {self.k})")

    @classmethod
    def explicit(cls, code: BinaryLinearCode | str, p: float) -> "ComponentSpec":
        if isinstance(code, str):
            code = BinaryLinearCode.from_string(code)
        return cls("explicit", p, code.n, code.k, code=code)

    @classmethod
    def repetition(cls, n: int, p: float) -> "ComponentSpec":
        return cls("rep", p, n, 1)

    @classmethod
    def mds(cls, n: int, k: int, p: float) -> "ComponentSpec":
        return cls("mds", p, n, k)

    @classmethod
    def random(
        cls, n: int, k: int, p: float, expectation: EnsembleExpectation | None = None
    ) -> "ComponentSpec":
        if expectation is not None and (expectation.n, expectation.k) != (n, k):
            raise DistributionError("expectation does not match (n, k)")
        return cls("random", p, n, k, expectation=expectation)

    def with_probability(self, p: float) -> "ComponentSpec":
        return ComponentSpec(self.kind, p, self.n, self.k, self.code, self.expectation)

    @property
    def label(self) -> str:
        if self.kind == "explicit":
            return f"({self.n},{self.k})[{self.code}]"
        if self.kind == "rep":
            return f"rep({self.n})"
        return f"{self.kind}({self.n},{self.k})"

    def resolved_expectation(self) -> EnsembleExpectation:
        if self.expectation is not None:
            return self.expectation
        return _exact_expectation(self.n, self.k)

    @property
    def exit_coefficients(self) -> np.ndarray:
        """Bernstein coefficients ``a_t`` with ``f_b(p) = sum a_t B_t(p) / n``."""
        if self.kind == "explicit":
            return self.code.exit_coefficients
        if self.kind == "random":
            return self.resolved_expectation().exit_coefficients
        if self.kind == "mds":
            return mds_exit_coefficients(self.n, self.k)
        a = np.zeros(self.n)
        a[self.n - 1] = self.n
        return a

    @property
    def b2(self) -> float:
        """(Expected) number of weight-2 codewords.

        For MDS entries this is the binary-equivalent count ``C(n, 2)`` when
        ``n = k + 1`` and 0 otherwise, matching the slope of their EXIT
        function at zero.
        """
        if self.kind == "explicit":
            wef = self.code.weight_enumerator
            return float(wef[2]) if len(wef) > 2 else 0.0
        if self.kind == "random":
            return self.resolved_expectation().b2
        if self.kind == "mds":
            return float(math.comb(self.n, 2)) if self.n == self.k + 1 else 0.0
        return 1.0 if self.n == 2 else 0.0

    def to_json(self) -> dict[str, Any]:
        if self.kind == "explicit":
            return {"type": "explicit", "G": str(self.code), "p": self.probability}
        if self.kind == "rep":
            return {"type": "rep", "n": self.n, "p": self.probability}
        out = {"type": self.kind, "n": self.n, "k": self.k, "p": self.probability}
        if self.kind == "random" and self.expectation is not None and not self.expectation.exact:
            out["samples"] = self.expectation.members
        return out


@dataclass(frozen=True)
class ComponentDistribution:
    """The pair (component codes, selection probabilities) and derived rate data."""

    entries: tuple[ComponentSpec, ...]

    @property
    def k(self) -> int:
        return self.entries[0].k

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([e.probability for e in self.entries])

    @property
    def lengths(self) -> np.ndarray:
        return np.array([e.n for e in self.entries])

    @property
    def n_bar(self) -> float:
        return float(sum(e.probability * e.n for e in self.entries))

    @property
    def rate(self) -> float:
        return self.k / self.n_bar

    @property
    def edge_fractions(self) -> np.ndarray:
        return self.probabilities * self.lengths / self.n_bar

    @property
    def delta_e_db(self) -> float:
        return -10.0 * math.log10(self.rate)

    @property
    def is_repetition_only(self) -> bool:
        return all(
            e.kind == "rep" or (e.kind == "explicit" and e.k == 1) for e in self.entries
        )

    @property
    def b2_mean(self) -> float:
        return float(sum(e.probability * e.b2 for e in self.entries))

    @cached_property
    def grouped_coefficients(self) -> dict[int, np.ndarray]:
        """Per-length Bernstein coefficients of the averaged BN EXIT function.

        ``f_b(p) = sum_n sum_t c_n[t] p^t (1-p)^(n-1-t)`` with
        ``c_n = sum over entries of length n of Lambda_h a_t / n_bar``.
        """
        out: dict[int, np.ndarray] = {}
        nb = self.n_bar
        for e in self.entries:
            if e.probability == 0.0:
                continue
            c = e.probability * e.exit_coefficients / nb
            out[e.n] = out[e.n] + c if e.n in out else c.copy()
        return out

    def to_json(self) -> dict[str, Any]:
        return {"k": self.k, "entries": [e.to_json() for e in self.entries]}


def build_distribution(
    entries: Sequence[ComponentSpec], renormalize: bool = False, renorm_tol: float = 1e-3
) -> ComponentDistribution:
    """Validate entries and build the distribution.

    Probabilities must sum to 1 within ``1e-9``. With ``renormalize`` a sum
    off by at most ``renorm_tol`` (rounded published tables) is rescaled.
    """
    entries = tuple(entries)
    if not entries:
        raise DistributionError("distribution has no entries")
    ks = {e.k for e in entries}
    if len(ks) != 1:
        raise DistributionError(f"mixed dimensions {sorted(ks)}")
    total = sum(e.probability for e in entries)
    if abs(total - 1.0) > PROB_TOL:
        if renormalize and abs(total - 1.0) <= renorm_tol:
            entries = tuple(e.with_probability(e.probability / total) for e in entries)
        else:
            raise DistributionError(f"probabilities sum to {total!r}, not 1")
    return ComponentDistribution(entries)


def spec_from_json(obj: dict[str, Any], k_default: int | None = None) -> ComponentSpec:
    try:
        kind = obj["type"]
        p = float(obj["p"])
        if kind == "explicit":
            return ComponentSpec.explicit(BinaryLinearCode.from_string(obj["G"]), p)
        if kind == "rep":
            return ComponentSpec.repetition(int(obj["n"]), p)
        n = int(obj["n"])
        k = int(obj.get("k", k_default if k_default is not None else 0))
        if kind == "mds":
            return ComponentSpec.mds(n, k, p)
        if kind == "random":
            exp = None
            if "samples" in obj:
                exp = sample_random_ensemble(n, k, int(obj["samples"]), int(obj.get("seed", 0)))
            elif k * n > ENUM_MAX_BITS:
                raise EnsembleSizeError(
                    f"random ({n},{k}) needs 'samples': exact enumeration is capped at k*n <= {ENUM_MAX_BITS}"
                )
            return ComponentSpec.random(n, k, p, exp)
    except KeyError as exc:
        raise DistributionError(f"entry missing field {exc}") from None
    except CodeError as exc:
        raise DistributionError(str(exc)) from None
    raise DistributionError(f"unknown entry type {obj.get('type')!r}")


def distribution_from_json(doc: Any, renormalize: bool = False) -> ComponentDistribution:
    """Build a distribution from a list of entries or ``{"entries": [...]}``."""
    if isinstance(doc, dict):
        entries = doc.get("entries")
        k_default = doc.get("k")
        renormalize = bool(doc.get("renormalize", renormalize))
    else:
        entries, k_default = doc, None
    if not isinstance(entries, list):
        raise DistributionError("distribution document must list entries")
    return build_distribution(
        [spec_from_json(e, k_default) for e in entries], renormalize=renormalize
    )


def load_distribution(path: str | Path) -> ComponentDistribution:
    with open(path) as fh:
        return distribution_from_json(json.load(fh))
