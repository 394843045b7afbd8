"""Density evolution for coded slotted ALOHA: recursion, thresholds, EXIT
charts and the stability bound."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .ensemble import ComponentDistribution

EPSILON = 1e-10
MAX_ITERS = 50_000
STALL_DELTA = 1e-14
BISECTION_TOL = 1e-4

CONVERGED = "converged"
STALLED = "stalled"
ITERATION_CAP = "iteration-cap"


def _check_load(G: float, R: float) -> None:
    if G < 0 or not math.isfinite(G):
        raise ValueError(f"load G={G} must be a finite non-negative number")
    if not 0.0 < R <= 1.0:
        raise ValueError(f"rate R={R} outside (0, 1]")


def exit_sn(q, G: float, R: float):
    """Slice-node EXIT function ``1 - exp(-(G/R) q)``."""
    _check_load(G, R)
    qa = np.asarray(q, dtype=float)
    if np.any(qa < 0) or np.any(qa > 1):
        raise ValueError("q must lie in [0, 1]")
    out = -np.expm1(-(G / R) * qa)
    return float(out) if out.ndim == 0 else out


def exit_sn_inverse(p, G: float, R: float):
    """``-(R/G) ln(1-p)``; NaN where ``p`` exceeds ``f_s(1)``."""
    if G <= 0:
        raise ValueError("inverse slice-node EXIT needs G > 0")
    _check_load(G, R)
    pa = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = -(R / G) * np.log1p(-pa)
    out = np.where(out <= 1.0 + 1e-15, out, np.nan)
    return float(out) if out.ndim == 0 else out


def _scalar_terms(dist: ComponentDistribution) -> list[tuple[float, int, int]]:
    terms = []
    for n, c in dist.grouped_coefficients.items():
        for t, ct in enumerate(c):
            if ct != 0.0:
                terms.append((float(ct), t, n - 1 - t))
    return terms


def bn_exit_function(dist: ComponentDistribution) -> Callable[[float], float]:
    """Scalar averaged burst-node EXIT ``f_b`` as a fast closure."""
    terms = _scalar_terms(dist)

    def f_b(p: float) -> float:
        s = 1.0 - p
        return sum(c * p**t * s**u for c, t, u in terms)

    return f_b


def exit_bn(dist: ComponentDistribution, p):
    """Averaged burst-node EXIT ``sum_h lambda_h f_b^(h)(p)`` (vectorized)."""
    pa = np.asarray(p, dtype=float)
    if np.any(pa < 0) or np.any(pa > 1):
        raise ValueError("p must lie in [0, 1]")
    out = np.zeros_like(pa)
    for n, c in dist.grouped_coefficients.items():
        t = np.arange(n)
        out = out + (c * pa[..., None] ** t * (1.0 - pa[..., None]) ** (n - 1 - t)).sum(-1)
    return float(out) if out.ndim == 0 else out


@dataclass
class DeTrace:
    G: float
    R: float
    p: list[float]
    q: list[float]
    verdict: str
    iterations: int

    @property
    def converged(self) -> bool:
        return self.verdict == CONVERGED

    @property
    def fixed_point(self) -> tuple[float, float] | None:
        if self.verdict == STALLED:
            return self.p[-1], self.q[-1]
        return None


def _run(
    step: Callable[[float], float],
    f_b: Callable[[float], float],
    G: float,
    R: float,
    max_iters: int,
    epsilon: float,
    stall_delta: float,
    keep_trace: bool,
) -> DeTrace:
    if max_iters < 1 or epsilon <= 0:
        raise ValueError("max_iters >= 1 and epsilon > 0 required")
    p = -math.expm1(-G / R)
    ps, qs = [p], [float("nan")]
    prev = p
    if p < epsilon:
        return DeTrace(G, R, ps, qs, CONVERGED, 0)
    verdict = ITERATION_CAP
    it = 0
    for it in range(1, max_iters + 1):
        q = f_b(prev) if keep_trace else 0.0
        p = step(prev)
        if keep_trace:
            ps.append(p)
            qs.append(q)
        if p < epsilon:
            verdict = CONVERGED
            break
        if abs(prev - p) < stall_delta:
            verdict = STALLED
            break
        prev = p
    if not keep_trace:
        ps.append(p)
        qs.append(f_b(prev))
    return DeTrace(G, R, ps, qs, verdict, it)


def de_iterate(
    dist: ComponentDistribution,
    G: float,
    max_iters: int = MAX_ITERS,
    epsilon: float = EPSILON,
    stall_delta: float = STALL_DELTA,
    keep_trace: bool = True,
) -> DeTrace:
    """Iterate ``p_l = f_s(f_b(p_{l-1}))`` from ``p_0 = 1 - exp(-G/R)``."""
    R = dist.rate
    _check_load(G, R)
    f_b = bn_exit_function(dist)
    a = G / R

    def step(p: float) -> float:
        return -math.expm1(-a * f_b(p))

    return _run(step, f_b, G, R, max_iters, epsilon, stall_delta, keep_trace)


def de_iterate_irsa(
    dist: ComponentDistribution,
    G: float,
    max_iters: int = MAX_ITERS,
    epsilon: float = EPSILON,
    stall_delta: float = STALL_DELTA,
    keep_trace: bool = True,
) -> DeTrace:
    """Repetition-only recursion ``p_l = 1 - exp(-G sum_h h Lambda_h p^(h-1))``."""
    if not dist.is_repetition_only:
        raise ValueError("IRSA recursion needs repetition codes only")
    R = dist.rate
    _check_load(G, R)
    poly = [(e.n * e.probability, e.n - 1) for e in dist.entries if e.probability]
    nb = dist.n_bar

    def f_b(p: float) -> float:
        return sum(c * p**d for c, d in poly) / nb

    def step(p: float) -> float:
        return -math.expm1(-G * sum(c * p**d for c, d in poly))

    return _run(step, f_b, G, R, max_iters, epsilon, stall_delta, keep_trace)


def de_iterate_spc(
    k: int,
    G: float,
    max_iters: int = MAX_ITERS,
    epsilon: float = EPSILON,
    stall_delta: float = STALL_DELTA,
    keep_trace: bool = True,
) -> DeTrace:
    """Single (k+1, k) parity-check recursion in its closed form."""
    R = k / (k + 1)
    _check_load(G, R)
    a = (k + 1) * G / k

    def f_b(p: float) -> float:
        return 1.0 - (1.0 - p) ** k

    def step(p: float) -> float:
        return -math.expm1(-a * (1.0 - (1.0 - p) ** k))

    return _run(step, f_b, G, R, max_iters, epsilon, stall_delta, keep_trace)


@dataclass
class ThresholdResult:
    G_star: float
    lower: float
    upper: float
    tolerance: float
    probes: list[tuple[float, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "G_star": self.G_star,
            "bracket": [self.lower, self.upper],
            "tolerance": self.tolerance,
            "probes": [{"G": g, "verdict": v} for g, v in self.probes],
        }


def threshold(
    dist: ComponentDistribution,
    tolerance: float = BISECTION_TOL,
    iterate: Callable[..., DeTrace] | None = None,
    max_iters: int = MAX_ITERS,
) -> ThresholdResult:
    """Largest load for which density evolution reaches zero, by bisection.

    The search runs on ``G`` over ``[0, 1]``; the estimate is the largest
    probed load that converged.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    run = iterate or de_iterate
    probes: list[tuple[float, str]] = []

    def ok(G: float) -> bool:
        tr = run(dist, G, max_iters=max_iters, keep_trace=False)
        probes.append((G, tr.verdict))
        return tr.converged

    lo, hi = 0.0, 1.0
    if ok(hi):
        return ThresholdResult(1.0, 1.0, 1.0, tolerance, probes)
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return ThresholdResult(lo, lo, hi, tolerance, probes)


def tunnel_threshold(dist: ComponentDistribution, grid: int = 4000) -> float:
    """Threshold from the open-tunnel condition ``f_s(f_b(p)) < p``.

    Equivalent to ``G* = R inf_p [-ln(1-p) / f_b(p)]``; a dense grid is
    refined with a bounded scalar minimization.
    """
    R = dist.rate
    ps = np.unique(
        np.concatenate([np.geomspace(1e-9, 0.2, grid // 2), np.linspace(0.2, 1 - 1e-9, grid // 2)])
    )
    fb = exit_bn(dist, ps)
    with np.errstate(divide="ignore"):
        ratio = -np.log1p(-ps) / fb
    i = int(np.nanargmin(ratio))
    best = float(ratio[i])
    if 0 < i < len(ps) - 1:
        f_b = bn_exit_function(dist)
        res = optimize.minimize_scalar(
            lambda x: -math.log1p(-x) / f_b(x),
            bounds=(ps[i - 1], ps[i + 1]),
            method="bounded",
            options={"xatol": 1e-12},
        )
        best = min(best, float(res.fun))
    return R * best


def stability_bound(dist: ComponentDistribution) -> float:
    """``k / (2 B2)`` with ``B2`` the expected weight-2 count; inf if zero."""
    b2 = dist.b2_mean
    if b2 <= 0.0:
        return math.inf
    return dist.k / (2.0 * b2)


def stability_derivative_check(
    dist: ComponentDistribution, G: float, h: float = 1e-6
) -> float:
    """Central finite difference of ``f_s(f_b(p))`` at ``p = 0``."""
    R = dist.rate
    _check_load(G, R)
    f_b = bn_exit_function(dist)
    a = G / R

    def F(p: float) -> float:
        return -math.expm1(-a * f_b(p))

    return (F(h) - F(-h)) / (2.0 * h)


@dataclass
class ExitChart:
    G: float
    R: float
    p: np.ndarray
    f_b: np.ndarray
    f_s_inv: np.ndarray
    area_b: float
    area_s: float

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.p.tolist(), self.f_b.tolist(), self.f_s_inv.tolist()))

    def to_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "f_b", "f_s_inv"])
        for p, fb, fi in self.rows():
            w.writerow([f"{p:.6g}", f"{fb:.6g}", "" if math.isnan(fi) else f"{fi:.6g}"])
        return buf.getvalue()


def exit_chart(dist: ComponentDistribution, G: float, samples: int = 101) -> ExitChart:
    """EXIT chart table on a uniform p grid plus the areas under both curves."""
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if G <= 0:
        raise ValueError("EXIT chart needs G > 0")
    R = dist.rate
    _check_load(G, R)
    ps = np.linspace(0.0, 1.0, samples)
    fb = exit_bn(dist, ps)
    fi = exit_sn_inverse(ps, G, R)
    f_b = bn_exit_function(dist)
    area_b = integrate.quad(f_b, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    area_s = integrate.quad(
        lambda q: -math.expm1(-(G / R) * q), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13
    )[0]
    return ExitChart(G, R, ps, np.asarray(fb), np.asarray(fi), area_b, area_s)
