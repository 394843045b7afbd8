"""Differential-evolution design of component-code distributions.

The search maximizes the decoding threshold at a fixed rate. Candidates are
scored with the open-tunnel form of the threshold, which is cheap to
vectorize over a whole population; the reported threshold of the winner is
recomputed by bisection on density evolution.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np
from scipy import optimize as sopt

from .ensemble import (
    ComponentDistribution,
    ComponentSpec,
    DistributionError,
    build_distribution,
    spec_from_json,
)
from .de_analysis import BISECTION_TOL, stability_bound, threshold, tunnel_threshold

GRID = 2000
PAIR_SEEDS = 8


class InfeasibleRate(DistributionError):
    """Target rate unreachable with the candidate lengths."""


def parse_rate(value: Any) -> float:
    if isinstance(value, str):
        return float(Fraction(value))
    return float(value)


@dataclass
class DesignProblem:
    candidates: list[ComponentSpec]
    rate: float
    rate_tol: float = 1e-9
    min_local_rate: float | None = None
    population: int = 40
    mutation: float = 0.7
    crossover: float = 0.9
    generations: int = 200
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "DesignProblem":
        try:
            cands = [spec_from_json({**c, "p": c.get("p", 0.0)}, doc.get("k")) for c in doc["candidates"]]
            return cls(
                candidates=cands,
                rate=parse_rate(doc["rate"]),
                rate_tol=float(doc.get("rate_tol", 1e-9)),
                min_local_rate=None if doc.get("min_local_rate") is None else parse_rate(doc["min_local_rate"]),
                population=int(doc.get("population", 40)),
                mutation=float(doc.get("mutation", 0.7)),
                crossover=float(doc.get("crossover", 0.9)),
                generations=int(doc.get("generations", 200)),
                seed=int(doc.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise DistributionError(f"design problem missing or bad field {exc}") from None

    def admitted(self) -> list[ComponentSpec]:
        """Candidates that respect the minimum local rate, deduplicated."""
        out, seen = [], set()
        for c in self.candidates:
            if self.min_local_rate is not None and c.k / c.n < self.min_local_rate - 1e-12:
                continue
            key = (c.kind, c.n, c.k, str(c.code) if c.code else None)
            if key not in seen:
                seen.add(key)
                out.append(c)
        if not out:
            raise DistributionError("no candidate satisfies the minimum local rate")
        if len({c.k for c in out}) != 1:
            raise DistributionError("candidates must share the same dimension k")
        return out


@dataclass
class DesignResult:
    candidates: list[ComponentSpec]
    weights: np.ndarray
    threshold: float
    search_threshold: float
    rate: float
    stability_bound: float
    delta_e_db: float
    trajectory: list[float] = field(default_factory=list)

    @property
    def distribution(self) -> ComponentDistribution:
        return _distribution(self.candidates, self.weights)

    def to_dict(self) -> dict[str, Any]:
        entries = [
            c.with_probability(float(w)).to_json()
            for c, w in zip(self.candidates, self.weights)
            if w > 0
        ]
        return {
            "entries": entries,
            "threshold": self.threshold,
            "search_threshold": self.search_threshold,
            "rate": self.rate,
            "stability_bound": self.stability_bound,
            "delta_e_db": self.delta_e_db,
            "generations": len(self.trajectory),
        }

    def trajectory_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["generation", "best_threshold"])
        for g, v in enumerate(self.trajectory):
            w.writerow([g, f"{v:.6g}"])
        return buf.getvalue()


def _distribution(cands: Sequence[ComponentSpec], weights: np.ndarray) -> ComponentDistribution:
    w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
    w = w / w.sum()
    entries = [c.with_probability(float(p)) for c, p in zip(cands, w) if p > 0]
    return build_distribution(entries, renormalize=True)


def evaluate(
    weights: Sequence[float],
    candidates: Sequence[ComponentSpec],
    tolerance: float = BISECTION_TOL,
) -> dict[str, float]:
    """Rate, threshold, stability bound and energy increment of one design."""
    w = np.asarray(weights, dtype=float)
    if len(w) != len(candidates):
        raise DistributionError("one weight per candidate required")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise DistributionError("weights must lie on the probability simplex")
    dist = build_distribution(
        [c.with_probability(float(p)) for c, p in zip(candidates, w) if p > 0]
    )
    return {
        "rate": dist.rate,
        "threshold": threshold(dist, tolerance).G_star,
        "stability_bound": stability_bound(dist),
        "delta_e_db": dist.delta_e_db,
    }


class _Scorer:
    """Tunnel threshold of many weight vectors at once."""

    def __init__(self, cands: Sequence[ComponentSpec], rate: float, grid: int = GRID):
        self.k = cands[0].k
        self.rate = rate
        self.lengths = np.array([c.n for c in cands], dtype=float)
        ps = np.unique(np.concatenate([
            np.geomspace(1e-9, 0.2, grid // 2), np.linspace(0.2, 1 - 1e-9, grid // 2)
        ]))
        self.ps = ps
        self.coeffs = [np.asarray(c.exit_coefficients, dtype=float) for c in cands]
        # A[h, i] = sum_t a_t p_i^t (1 - p_i)^(n_h - 1 - t)
        self.table = np.stack([self._curve(a, ps) for a in self.coeffs])
        self.neglog = -np.log1p(-ps)

    @staticmethod
    def _curve(a: np.ndarray, p):
        t = np.arange(len(a))
        p = np.asarray(p, dtype=float)
        return (a * p[..., None] ** t * (1 - p[..., None]) ** (len(a) - 1 - t)).sum(-1)

    def coarse(self, W: np.ndarray) -> np.ndarray:
        nbar = W @ self.lengths
        fb = (W @ self.table) / nbar[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = self.neglog / fb
        ratio = np.where(fb > 0, ratio, np.inf)
        return (self.k / nbar) * ratio.min(axis=1)

    def refined(self, w: np.ndarray) -> float:
        nbar = float(w @ self.lengths)
        fb = (w @ self.table) / nbar
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(fb > 0, self.neglog / fb, np.inf)
        i = int(np.argmin(ratio))
        best = float(ratio[i])
        if 0 < i < len(self.ps) - 1:
            active = [(float(p), a) for p, a in zip(w, self.coeffs) if p > 0]

            def f(x: float) -> float:
                val = sum(p * float(self._curve(a, x)) for p, a in active) / nbar
                return -math.log1p(-x) / val if val > 0 else math.inf

            res = sopt.minimize_scalar(
                f, bounds=(self.ps[i - 1], self.ps[i + 1]), method="bounded",
                options={"xatol": 1e-12},
            )
            best = min(best, float(res.fun))
        return (self.k / nbar) * best


def project(x: np.ndarray, lengths: np.ndarray, target_nbar: float) -> np.ndarray:
    """Map onto the simplex slice with expected length ``target_nbar``.

    Negative parts are dropped, the vector is normalized, and it is then
    blended toward the longest (or shortest) candidate just enough to hit the
    target expected length.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    s = x.sum()
    x = np.full(len(x), 1.0 / len(x)) if s <= 0 else x / s
    nbar = float(x @ lengths)
    if abs(nbar - target_nbar) < 1e-15:
        return x
    idx = int(np.argmax(lengths)) if nbar < target_nbar else int(np.argmin(lengths))
    t = (target_nbar - nbar) / (lengths[idx] - nbar)
    x = (1.0 - t) * x
    x[idx] += t
    return x


def _seed_points(lengths: np.ndarray, target: float) -> list[np.ndarray]:
    d = len(lengths)
    pts = []
    for i in range(d):
        if abs(lengths[i] - target) < 1e-12:
            e = np.zeros(d)
            e[i] = 1.0
            pts.append(e)
    for i, j in itertools.combinations(range(d), 2):
        lo, hi = sorted((i, j), key=lambda h: lengths[h])
        if lengths[lo] < target < lengths[hi]:
            e = np.zeros(d)
            t = (target - lengths[lo]) / (lengths[hi] - lengths[lo])
            e[lo], e[hi] = 1.0 - t, t
            pts.append(e)
    return pts


def optimize(problem: DesignProblem, tolerance: float = BISECTION_TOL) -> DesignResult:
    """DE/rand/1/bin search over the candidate simplex at the target rate."""
    cands = problem.admitted()
    k = cands[0].k
    if not 0.0 < problem.rate <= 1.0:
        raise InfeasibleRate(f"rate {problem.rate} outside (0, 1]")
    target = k / problem.rate
    lengths = np.array([c.n for c in cands], dtype=float)
    if not lengths.min() - 1e-9 <= target <= lengths.max() + 1e-9:
        raise InfeasibleRate(
            f"rate {problem.rate} needs expected length {target:.6g}, "
            f"outside [{lengths.min():g}, {lengths.max():g}]"
        )
    if problem.population < 4 or problem.generations < 0:
        raise DistributionError("population >= 4 and generations >= 0 required")
    scorer = _Scorer(cands, problem.rate)
    rng = np.random.default_rng(problem.seed)
    d = len(cands)
    NP = problem.population

    seeds = _seed_points(lengths, target)
    if not seeds:
        raise InfeasibleRate("no feasible distribution on the candidate supports")
    seed_arr = np.array(seeds)
    seed_scores = scorer.coarse(seed_arr)
    order = np.argsort(-seed_scores, kind="stable")[:min(PAIR_SEEDS, NP // 2)]
    pop = [seed_arr[i] for i in order]
    while len(pop) < NP:
        pop.append(project(rng.dirichlet(np.ones(d)), lengths, target))
    pop = np.array(pop)
    fit = scorer.coarse(pop)
    trajectory = [float(fit.max())]

    if d > 1:
        for _ in range(problem.generations):
            trials = np.empty_like(pop)
            for i in range(NP):
                choices = [j for j in range(NP) if j != i]
                r1, r2, r3 = rng.choice(choices, size=3, replace=False)
                mutant = pop[r1] + problem.mutation * (pop[r2] - pop[r3])
                cross = rng.random(d) < problem.crossover
                cross[rng.integers(d)] = True
                trials[i] = project(np.where(cross, mutant, pop[i]), lengths, target)
            tfit = scorer.coarse(trials)
            better = tfit > fit
            pop[better] = trials[better]
            fit[better] = tfit[better]
            trajectory.append(float(fit.max()))

    best = int(np.argmax(fit))  # ties resolve to the lowest index
    w = pop[best]
    w = np.where(w < 1e-12, 0.0, w)
    w = project(w, lengths, target)
    dist = _distribution(cands, w)
    return DesignResult(
        candidates=list(cands),
        weights=w,
        threshold=threshold(dist, tolerance).G_star,
        search_threshold=scorer.refined(w),
        rate=dist.rate,
        stability_bound=stability_bound(dist),
        delta_e_db=dist.delta_e_db,
        trajectory=trajectory,
    )


def repetition_candidates(max_length: int, min_length: int = 2) -> list[ComponentSpec]:
    return [ComponentSpec.repetition(n, 0.0) for n in range(min_length, max_length + 1)]
