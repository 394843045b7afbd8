from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csa import catalog
from csa.capacity import capacity_bound
from csa.de_analysis import (
    CONVERGED,
    STALLED,
    de_iterate,
    de_iterate_irsa,
    de_iterate_spc,
    exit_bn,
    exit_chart,
    exit_sn,
    exit_sn_inverse,
    stability_bound,
    stability_derivative_check,
    threshold,
    tunnel_threshold,
)
from csa.ensemble import ComponentSpec, build_distribution
from csa.gf2codes import BinaryLinearCode


def single(spec):
    return build_distribution([spec.with_probability(1.0)])


def spc_dist(k):
    return single(ComponentSpec.explicit(BinaryLinearCode.spc(k), 1.0))


def rep_dist(pmf):
    return build_distribution([ComponentSpec.repetition(n, p) for n, p in pmf.items()])


@st.composite
def rep_pmfs(draw):
    lengths = draw(st.lists(st.integers(2, 8), min_size=1, max_size=4, unique=True))
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=len(lengths), max_size=len(lengths))))
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return dict(zip(lengths, w.tolist()))


def test_exit_sn_examples():
    assert exit_sn(0.0, 0.7, 0.5) == 0.0
    assert exit_sn(1.0, 1 / 3, 1 / 3) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    q = np.linspace(0, 1, 50)
    assert np.all(np.diff(exit_sn(q, 0.8, 0.4)) >= 0)
    with pytest.raises(ValueError):
        exit_sn(1.2, 0.5, 0.5)
    with pytest.raises(ValueError):
        exit_sn(0.5, -0.1, 0.5)


def test_exit_sn_inverse_roundtrip():
    q = np.linspace(0, 1, 21)
    p = exit_sn(q, 0.6, 0.5)
    assert np.allclose(exit_sn_inverse(p, 0.6, 0.5), q, atol=1e-12)
    assert math.isnan(exit_sn_inverse(0.99, 0.6, 0.5))


def test_spc_examples():
    assert de_iterate(spc_dist(2), 0.30).verdict == CONVERGED
    tr = de_iterate(spc_dist(2), 0.40)
    assert tr.verdict == STALLED and tr.fixed_point[0] > 0.1


def test_repetition_examples():
    d = rep_dist({2: 1.0})
    assert de_iterate(d, 0.45).verdict == CONVERGED
    assert de_iterate(d, 0.55).verdict == STALLED


@given(rep_pmfs(), st.floats(0.05, 1.0))
@settings(max_examples=40)
def test_trace_monotone_and_bounded(pmf, G):
    tr = de_iterate(rep_dist(pmf), G, max_iters=3000)
    p = np.array(tr.p)
    assert p[0] == pytest.approx(1 - math.exp(-G / tr.R))
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(np.diff(p) <= 1e-15)


@given(rep_pmfs(), st.floats(0.05, 1.0))
@settings(max_examples=40)
def test_irsa_fast_path_matches_general(pmf, G):
    d = rep_dist(pmf)
    a = de_iterate(d, G, max_iters=500)
    b = de_iterate_irsa(d, G, max_iters=500)
    n = min(len(a.p), len(b.p))
    assert np.max(np.abs(np.array(a.p[:n]) - np.array(b.p[:n]))) < 1e-9
    assert a.verdict == b.verdict


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_spc_fast_path_matches_general(k):
    for G in (0.1, 1 / (k + 1) - 0.02, 1 / (k + 1) + 0.02):
        a = de_iterate(spc_dist(k), G, max_iters=2000)
        b = de_iterate_spc(k, G, max_iters=2000)
        assert np.allclose(a.p, b.p, atol=1e-12) and a.verdict == b.verdict


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_spc_threshold(k):
    res = threshold(spc_dist(k))
    assert res.G_star == pytest.approx(1 / (k + 1), abs=1e-3)
    assert res.upper - res.lower <= res.tolerance


def test_threshold_bracket_invariants():
    d = catalog.repetition(catalog.IRSA["1/3"])
    res = threshold(d)
    verdict = dict(res.probes)
    assert verdict[res.lower] == CONVERGED and verdict[res.upper] != CONVERGED
    assert res.upper - res.lower <= 1e-4
    assert res.G_star == pytest.approx(0.8792, abs=1e-3)


def test_threshold_degenerate_length_k_entry():
    # a length-1 repetition entry never gets decoded
    d = build_distribution([ComponentSpec.repetition(1, 0.2), ComponentSpec.repetition(3, 0.8)])
    assert threshold(d).G_star == 0.0


@given(rep_pmfs())
@settings(max_examples=20)
def test_bisection_matches_tunnel_oracle(pmf):
    d = rep_dist(pmf)
    assert threshold(d).G_star == pytest.approx(tunnel_threshold(d), abs=5e-4)


CATALOG = {
    "irsa-1/3": lambda: catalog.repetition(catalog.IRSA["1/3"]),
    "irsa-2/5": lambda: catalog.repetition(catalog.IRSA["2/5"]),
    "random-k2-1/3": lambda: catalog.random_codes(2, catalog.RANDOM_K2["1/3"]),
    "random-k2-3/5": lambda: catalog.random_codes(2, catalog.RANDOM_K2["3/5"]),
    "specific-1/2": lambda: catalog.specific_k2("1/2"),
    "specific-2/5": lambda: catalog.specific_k2("2/5"),
    "mds-k3": lambda: catalog.mds("k3_r0.667"),
    "rate-1/5": lambda: catalog.repetition(catalog.IRSA_RATE_1_5),
}


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_threshold_below_bounds(name):
    d = CATALOG[name]()
    g = threshold(d).G_star
    assert g <= stability_bound(d) + 1e-4
    assert g <= capacity_bound(d.rate) + 1e-4


def test_stability_bound_examples():
    assert stability_bound(catalog.repetition(catalog.IRSA["1/3"])) == pytest.approx(0.9025, abs=1e-4)
    assert stability_bound(catalog.specific_k2("3/5")) == pytest.approx(3 / 7, abs=1e-4)
    assert stability_bound(catalog.specific_k2("1/2")) == pytest.approx(1.0)
    assert stability_bound(rep_dist({3: 1.0})) == math.inf


def test_stability_derivative_examples():
    assert stability_derivative_check(rep_dist({2: 1.0}), 0.5) == pytest.approx(1.0, abs=1e-5)
    assert stability_derivative_check(rep_dist({3: 1.0}), 0.8) == pytest.approx(0.0, abs=1e-5)
    assert stability_derivative_check(spc_dist(2), 1 / 3) == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_stability_derivative_matches_bound(name):
    d = CATALOG[name]()
    G = 0.5
    assert stability_derivative_check(d, G) == pytest.approx(2 * G * d.b2_mean / d.k, abs=1e-5)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_exit_chart_areas_and_tunnel(name):
    d = CATALOG[name]()
    G = threshold(d).G_star - 0.05
    chart = exit_chart(d, G, 201)
    assert chart.area_b == pytest.approx(d.rate, abs=1e-4)
    R = d.rate
    assert chart.area_s == pytest.approx(1 + (R / G) * math.exp(-G / R) - R / G, abs=1e-10)
    p = np.linspace(1e-6, 1, 400)
    fb = exit_bn(d, p)
    assert np.all(exit_sn(fb, G, R) < p)


def test_exit_chart_csv_clips_invalid_rows():
    chart = exit_chart(rep_dist({2: 1.0}), 0.4, 11)
    lines = chart.to_csv("cfg").splitlines()
    assert lines[0] == "# cfg" and lines[1] == "p,f_b,f_s_inv"
    assert lines[-1].endswith(",")  # f_s^-1 undefined at p = 1
    with pytest.raises(ValueError):
        exit_chart(rep_dist({2: 1.0}), 0.4, 1)
