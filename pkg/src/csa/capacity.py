"""Load ceiling for a given rate, its inverse, and the EXIT-area check."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable

from .ensemble import ComponentDistribution

ROOT_TOL = 1e-12
AREA_SLACK = 1e-9


@dataclass(frozen=True)
class CapacityPoint:
    R: float
    G_bound: float


def capacity_bound(R: float) -> float:
    """Positive root of ``G = 1 - exp(-G/R)``; 0 at ``R = 1``."""
    if not (0.0 < R <= 1.0) or math.isnan(R):
        raise ValueError(f"rate {R} outside (0, 1]")
    if R == 1.0:
        return 0.0

    # g(G) = 1 - exp(-G/R) - G is positive just above 0 and negative at 1
    def g(G: float) -> float:
        return -math.expm1(-G / R) - G

    lo, hi = 0.0, 1.0
    # move lo off the trivial root at 0
    step = 0.5
    while g(step) <= 0.0:
        step *= 0.5
        if step < 1e-300:
            return 0.0
    lo = step
    while hi - lo > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def min_rate_for_load(G: float) -> float:
    """Smallest rate compatible with load ``G``: ``-G / ln(1 - G)``."""
    if not 0.0 <= G < 1.0:
        raise ValueError(f"load {G} outside [0, 1)")
    if G == 0.0:
        return 1.0
    return -G / math.log1p(-G)


def slice_area(G: float, R: float) -> float:
    """Area under the slice-node EXIT curve, ``1 + (R/G)(exp(-G/R) - 1)``."""
    if G <= 0.0:
        return 0.0
    return 1.0 + (R / G) * math.expm1(-G / R)


@dataclass(frozen=True)
class AreaCheck:
    G: float
    area_b: float
    area_s: float
    admissible: bool

    @property
    def total(self) -> float:
        return self.area_b + self.area_s

    @property
    def verdict(self) -> str:
        return "admissible" if self.admissible else "violated"


def area_admissibility(dist: ComponentDistribution, G: float) -> AreaCheck:
    R = dist.rate
    a_b = R
    a_s = slice_area(G, R)
    return AreaCheck(G, a_b, a_s, a_b + a_s <= 1.0 + AREA_SLACK)


def bound_curve(rates: Iterable[float]) -> list[CapacityPoint]:
    return [CapacityPoint(R, capacity_bound(R)) for R in rates]


def bound_csv(points: Iterable[CapacityPoint], comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["R", "G_bound"])
    for pt in points:
        w.writerow([f"{pt.R:.6g}", f"{pt.G_bound:.6g}"])
    return buf.getvalue()
