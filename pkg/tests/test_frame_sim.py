from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from scipy import stats

from csa import catalog
from csa.ensemble import ComponentSpec, build_distribution
from csa.frame_sim import (
    LOST,
    RECOVERED,
    CampaignConfig,
    FrameError,
    FrameGraph,
    generate_frame,
    genie_decode,
    make_burst,
    run_campaign,
    sic_decode,
    verify_outcome,
)
from csa.gf2codes import BinaryLinearCode

REP2 = BinaryLinearCode.repetition(2)
REP3 = BinaryLinearCode.repetition(3)


def three_user_repetition_frame():
    # user 1 on slices 1,2; user 2 on 2,3,4; user 3 on 1,4 (zero-based below)
    return FrameGraph(4, 1, [
        make_burst(0, REP2, [0, 1], [0x11]),
        make_burst(1, REP3, [1, 2, 3], [0x22]),
        make_burst(2, REP2, [0, 3], [0x33]),
    ])


def test_fixed_zero_is_empty():
    f = generate_frame(10, 2, catalog.specific_k2("1/2"), ("fixed", 0), seed=1)
    assert f.active == 0 and sum(f.multiplicity) == 0
    out = sic_decode(f)
    assert out.recovered == 0 and out.iterations == 0


def test_frame_invariants():
    d = catalog.specific_k2("1/3")
    f = generate_frame(40, 2, d, ("fixed", 30), seed=2)
    mult = [0] * f.n_slices
    pay = [0] * f.n_slices
    for b in f.bursts:
        assert len(set(b.positions)) == b.n
        assert list(b.segments) == b.code.encode(b.info)
        for pos, s in zip(b.positions, b.segments):
            mult[pos] += 1
            pay[pos] ^= s
    assert mult == f.multiplicity and pay == f.slice_payload


def test_code_longer_than_frame():
    d = build_distribution([ComponentSpec.repetition(6, 1.0)])
    with pytest.raises(FrameError):
        generate_frame(5, 1, d, ("fixed", 1))


def test_bernoulli_activation_mean():
    d = build_distribution([ComponentSpec.repetition(2, 1.0)])
    rng = np.random.default_rng(9)
    pi, N = 0.3, 50
    counts = [generate_frame(20, 1, d, ("bernoulli", pi, N), rng).active for _ in range(10_000)]
    sigma = np.sqrt(N * pi * (1 - pi) / len(counts))
    assert abs(np.mean(counts) - pi * N) < 3 * sigma


def test_three_user_recovery_order():
    f = three_user_repetition_frame()
    out = sic_decode(f)
    assert out.status == [RECOVERED] * 3 and verify_outcome(f, out)
    # user 2 first; users 1 and 3 become clean in the same round
    assert out.recovered_at == {1: 1, 0: 2, 2: 2}
    assert out.residual_slices == 0


def test_example_encoding_decoding_scenario():
    G = BinaryLinearCode.from_string("1011,0110")
    spc = BinaryLinearCode.from_string("101,011")  # systematic (3,2) parity check
    f = FrameGraph(5, 2, [
        make_burst(0, G, [0, 3, 6, 8], [0xA1, 0xB2]),
        make_burst(1, spc, [1, 3, 9], [0xC3, 0xD4]),
        make_burst(2, spc, [1, 5, 8], [0xE5, 0xF6]),
    ])
    assert [i for i, m in enumerate(f.multiplicity) if m == 1] == [0, 5, 6, 9]
    assert [i for i, m in enumerate(f.multiplicity) if m > 1] == [1, 3, 8]
    out = sic_decode(f)
    assert out.status == [RECOVERED] * 3 and verify_outcome(f, out)
    assert out.recovered_at == {0: 1, 1: 2, 2: 2}


def test_stopping_set():
    f = FrameGraph(2, 1, [make_burst(0, REP2, [0, 1], [1]), make_burst(1, REP2, [0, 1], [2])])
    assert sic_decode(f).status == [LOST, LOST]
    assert genie_decode(f).status == [LOST, LOST]


def test_single_user_always_recovered():
    rng = np.random.default_rng(4)
    d = catalog.specific_k2("1/3")
    for _ in range(50):
        f = generate_frame(20, 2, d, ("fixed", 1), rng)
        assert sic_decode(f).status == [RECOVERED]
        assert genie_decode(f).status == [RECOVERED]


def brute_genie(frame):
    """Users whose unknowns vanish on the whole null space of the frame system."""
    k = frame.k
    nvar = frame.active * k
    eqs = []
    for occ in frame.incidence():
        if occ:
            m = 0
            for bi, j in occ:
                m ^= frame.bursts[bi].code.columns[j] << (bi * k)
            eqs.append(m)
    free = 0
    for x in range(1 << nvar):
        if all(bin(m & x).count("1") % 2 == 0 for m in eqs):
            free |= x
    return {bi for bi in range(frame.active) if not (free >> (bi * k)) & ((1 << k) - 1)}


def test_genie_matches_null_space_oracle():
    rng = np.random.default_rng(12)
    d = catalog.specific_k2("1/3")
    d1 = catalog.repetition(catalog.IRSA["1/3"])
    for trial in range(150):
        if trial % 2:
            f = generate_frame(8, 2, d, ("fixed", int(rng.integers(1, 6))), rng)
        else:
            f = generate_frame(8, 1, d1, ("fixed", int(rng.integers(1, 10))), rng)
        g = genie_decode(f)
        assert g.recovered_users == brute_genie(f)
        assert verify_outcome(f, g)
        assert genie_decode(f, presolve=True).status == g.status


def test_sic_contained_in_genie():
    rng = np.random.default_rng(21)
    d = catalog.specific_k2("1/3")
    for _ in range(1000):
        f = generate_frame(30, 2, d, ("fixed", int(rng.integers(5, 35))), rng)
        s, g = sic_decode(f), genie_decode(f)
        assert s.recovered_users <= g.recovered_users
        assert verify_outcome(f, s) and verify_outcome(f, g)


def test_random_ensemble_frames():
    d = catalog.random_codes(2, catalog.RANDOM_K2["2/5"])
    f = generate_frame(50, 2, d, ("fixed", 30), seed=5)
    assert all(b.code.d_min >= 2 for b in f.bursts)
    out = sic_decode(f)
    assert verify_outcome(f, out)


def test_mds_frames():
    d = catalog.mds("k3_r0.599")
    f = generate_frame(60, 3, d, ("fixed", 20), seed=8)
    out = sic_decode(f)
    assert out.recovered > 0 and verify_outcome(f, out)
    with pytest.raises(ValueError):
        genie_decode(f)


def test_mds_any_k_rule():
    f = FrameGraph(2, 2, [make_burst(0, (4, 2), [0, 1, 2, 3], [5, 6]),
                          make_burst(1, (3, 2), [1, 2, 3], [7, 8])])
    # only slice 0 is clean: one known segment of a (4,2) burst is not enough
    assert sic_decode(f).status == [LOST, LOST]


def test_slice_degree_poisson():
    d = catalog.specific_k2("1/3")
    G, M = 0.6, 2000
    deg = generate_frame(M, 2, d, ("fixed", int(G * M)), seed=17).slice_degrees()
    lam = G / d.rate
    top = 6
    obs = np.bincount(np.minimum(deg, top), minlength=top + 1)
    pmf = stats.poisson.pmf(np.arange(top), lam)
    probs = np.append(pmf, 1 - pmf.sum())
    _, pval = stats.chisquare(obs, probs * len(deg))
    assert pval > 0.01


def campaign(**kw):
    doc = {"M": 60, "distribution": [{"type": "explicit", "G": "110,011", "p": 1.0}],
           "loads": [0.2, 0.4], "frames_per_point": 60, "decoder": "both", "seed": 3}
    doc.update(kw)
    return CampaignConfig.from_dict(doc)


def test_campaign_deterministic_across_workers():
    a = run_campaign(campaign(), workers=1)
    b = run_campaign(campaign(), workers=2, chunk=7)
    assert a.to_csv() == b.to_csv()
    assert run_campaign(campaign(seed=4)).to_csv() != a.to_csv()


def test_campaign_report_invariants():
    rep = run_campaign(campaign(loads=[0.2, 0.5, 0.8], frames_per_point=80))
    by = {(p.load, p.decoder): p for p in rep.points}
    for p in rep.points:
        assert p.S <= p.offered + 1e-12
        assert p.plr == pytest.approx(1 - p.S / p.offered, abs=1e-12)
    for G in (0.2, 0.5, 0.8):
        assert by[(G, "genie")].S >= by[(G, "sic")].S
    text = rep.to_csv("config_hash=abc").splitlines()
    assert text[0] == "# config_hash=abc" and text[1].startswith("load,decoder")
    json.dumps(rep.to_dict())


def test_bernoulli_campaign_offered_load():
    cfg = campaign(mode="bernoulli", N=400, loads=[0.5], frames_per_point=200, decoder="sic")
    p = run_campaign(cfg).points[0]
    assert p.offered == pytest.approx(0.5, abs=0.02)


def test_campaign_config_errors():
    from csa.ensemble import DistributionError
    with pytest.raises(DistributionError):
        campaign(decoder="magic")
    with pytest.raises(DistributionError):
        campaign(mode="bernoulli")
    with pytest.raises(DistributionError):
        CampaignConfig.from_dict({"M": 10})


def test_below_threshold_plr():
    cfg = CampaignConfig.from_dict({
        "M": 500, "distribution": catalog.specific_k2("1/3").to_json(),
        "loads": [0.2], "frames_per_point": 10_000, "decoder": "sic", "seed": 1,
    })
    p = run_campaign(cfg).points[0]
    assert p.plr < 1e-3
