"""Finite-length frame simulation: frame generation, the iterative
interference-subtraction decoder, the full GF(2) (genie) decoder and
Monte Carlo campaigns.

Payloads are ints holding ``payload_bytes`` bytes; XOR of ints is bytewise
XOR of the underlying byte strings.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .ensemble import (
    ComponentDistribution,
    ComponentSpec,
    DistributionError,
    _sample_admissible_columns,
    distribution_from_json,
)
from .gf2codes import BinaryLinearCode, map_erasure_decode, solve_information

PAYLOAD_BYTES = 16
SIC_MAX_ITERS = 100

RECOVERED = "fully-recovered"
LOST = "lost"


class FrameError(ValueError):
    """Frame cannot be built (e.g. a code longer than the frame)."""


@lru_cache(maxsize=4096)
def _code(n: int, rows: tuple[int, ...]) -> BinaryLinearCode:
    return BinaryLinearCode(n, rows)


def mds_parity(info: Sequence[int], index: int, payload_bytes: int) -> int:
    """Deterministic stand-in for an MDS parity segment (no field arithmetic)."""
    h = hashlib.blake2b(digest_size=payload_bytes, person=b"mds-parity")
    for u in info:
        h.update(u.to_bytes(payload_bytes, "little"))
    h.update(index.to_bytes(4, "little"))
    return int.from_bytes(h.digest(), "little")


@dataclass
class Burst:
    user: int
    entry: int
    n: int
    k: int
    code: BinaryLinearCode | None  # None marks an MDS burst
    positions: tuple[int, ...]
    info: tuple[int, ...]
    segments: tuple[int, ...]

    @property
    def is_mds(self) -> bool:
        return self.code is None


def make_burst(
    user: int,
    code: BinaryLinearCode | tuple[int, int],
    positions: Sequence[int],
    info: Sequence[int],
    entry: int = 0,
    payload_bytes: int = PAYLOAD_BYTES,
) -> Burst:
    """Encode one burst; ``code`` is a binary code or ``(n, k)`` for MDS."""
    positions = tuple(int(x) for x in positions)
    info = tuple(int(u) for u in info)
    if isinstance(code, BinaryLinearCode):
        n, k = code.n, code.k
        segments = tuple(code.encode(info))
        c: BinaryLinearCode | None = code
    else:
        n, k = code
        segments = info + tuple(mds_parity(info, j, payload_bytes) for j in range(k, n))
        c = None
    if len(positions) != n or len(set(positions)) != n:
        raise FrameError(f"burst needs {n} distinct slice positions")
    if len(info) != k:
        raise FrameError(f"burst needs {k} information segments")
    return Burst(user, entry, n, k, c, positions, info, segments)


@dataclass
class FrameGraph:
    M: int
    k: int
    bursts: list[Burst]
    payload_bytes: int = PAYLOAD_BYTES
    slice_payload: list[int] = field(init=False)
    multiplicity: list[int] = field(init=False)

    def __post_init__(self) -> None:
        size = self.k * self.M
        self.slice_payload = [0] * size
        self.multiplicity = [0] * size
        for b in self.bursts:
            if b.k != self.k:
                raise FrameError("burst dimension differs from frame k")
            for pos, seg in zip(b.positions, b.segments):
                if not 0 <= pos < size:
                    raise FrameError(f"slice {pos} outside frame of {size} slices")
                self.slice_payload[pos] ^= seg
                self.multiplicity[pos] += 1

    @property
    def n_slices(self) -> int:
        return self.k * self.M

    @property
    def active(self) -> int:
        return len(self.bursts)

    def slice_degrees(self) -> np.ndarray:
        return np.asarray(self.multiplicity, dtype=np.int64)

    def incidence(self) -> list[list[tuple[int, int]]]:
        """Per slice, the ``(burst, segment)`` pairs placed on it."""
        out: list[list[tuple[int, int]]] = [[] for _ in range(self.n_slices)]
        for bi, b in enumerate(self.bursts):
            for j, pos in enumerate(b.positions):
                out[pos].append((bi, j))
        return out


def _activation_count(activation: tuple, rng: np.random.Generator) -> int:
    mode = activation[0]
    if mode == "fixed":
        n_a = int(activation[1])
        if n_a < 0:
            raise FrameError("active user count must be >= 0")
        return n_a
    if mode == "bernoulli":
        pi, N = float(activation[1]), int(activation[2])
        if not 0.0 <= pi <= 1.0 or N < 0:
            raise FrameError(f"bad bernoulli activation (pi={pi}, N={N})")
        return int(rng.binomial(N, pi))
    raise FrameError(f"unknown activation mode {mode!r}")


def generate_frame(
    M: int,
    k: int,
    dist: ComponentDistribution,
    activation: tuple,
    seed: int | np.random.SeedSequence | np.random.Generator = 0,
    payload_bytes: int = PAYLOAD_BYTES,
) -> FrameGraph:
    """Draw one frame.

    ``activation`` is ``("fixed", N_a)`` or ``("bernoulli", pi, N)``. Each
    active user picks a component per the distribution and that many
    distinct slices uniformly at random.
    """
    if M < 1:
        raise FrameError("M must be >= 1")
    if dist.k != k:
        raise FrameError(f"distribution has k={dist.k}, frame has k={k}")
    size = k * M
    longest = max(e.n for e in dist.entries if e.probability > 0)
    if longest > size:
        raise FrameError(f"code length {longest} exceeds {size} slices")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_a = _activation_count(activation, rng)
    probs = dist.probabilities / dist.probabilities.sum()
    choice = rng.choice(len(dist.entries), size=n_a, p=probs) if n_a else np.zeros(0, int)

    # codes for random-ensemble entries are drawn in one batch per entry
    drawn: dict[int, list[BinaryLinearCode]] = {}
    for ei, e in enumerate(dist.entries):
        if e.kind == "random":
            count = int((choice == ei).sum())
            if count:
                cols = _sample_admissible_columns(e.n, e.k, count, rng, 10**7)
                drawn[ei] = [
                    _code(e.n, tuple(
                        sum(((int(c) >> i) & 1) << j for j, c in enumerate(row))
                        for i in range(e.k)
                    ))
                    for row in cols
                ]
    fixed = {
        ei: _fixed_code(e) for ei, e in enumerate(dist.entries) if e.kind in ("explicit", "rep", "mds")
    }

    lengths = np.array([e.n for e in dist.entries])[choice]
    positions = _distinct_positions(lengths, size, rng)
    blob = rng.bytes(payload_bytes * k * n_a)
    step = payload_bytes
    bursts = []
    for user, ei in enumerate(choice.tolist()):
        e = dist.entries[ei]
        code = drawn[ei].pop() if e.kind == "random" else fixed[ei]
        base = user * k * step
        info = [
            int.from_bytes(blob[base + i * step: base + (i + 1) * step], "little")
            for i in range(k)
        ]
        bursts.append(make_burst(user, code, positions[user], info, ei, payload_bytes))
    return FrameGraph(M, k, bursts, payload_bytes)


def _distinct_positions(
    lengths: np.ndarray, size: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Per burst, ``lengths[u]`` distinct slices drawn uniformly from ``size``."""
    out: list[np.ndarray] = [None] * len(lengths)  # type: ignore[list-item]
    for n in np.unique(lengths):
        users = np.flatnonzero(lengths == n)
        if n * 4 > size:
            for u in users:
                out[u] = rng.choice(size, size=n, replace=False)
            continue
        # uniform draws with replacement; rows holding a repeat are redrawn
        todo = users
        while len(todo):
            rows = rng.integers(0, size, size=(len(todo), n))
            srt = np.sort(rows, axis=1)
            ok = (np.diff(srt, axis=1) != 0).all(axis=1)
            for u, row in zip(todo[ok], rows[ok]):
                out[u] = row
            todo = todo[~ok]
    return out


def _fixed_code(e: ComponentSpec) -> BinaryLinearCode | tuple[int, int]:
    if e.kind == "explicit":
        return e.code
    if e.kind == "rep":
        return BinaryLinearCode.repetition(e.n)
    return (e.n, e.k)


@dataclass
class DecodeOutcome:
    status: list[str]
    info: list[tuple[int, ...] | None]
    iterations: int
    residual_slices: int
    recovered_at: dict[int, int] = field(default_factory=dict)

    @property
    def recovered(self) -> int:
        return sum(s == RECOVERED for s in self.status)

    @property
    def recovered_users(self) -> set[int]:
        return {i for i, s in enumerate(self.status) if s == RECOVERED}


class _SicState:
    def __init__(self, frame: FrameGraph):
        self.frame = frame
        self.payload = list(frame.slice_payload)
        self.mult = list(frame.multiplicity)
        self.occupants = [set(s) for s in frame.incidence()]
        self.known: list[dict[int, int]] = [{} for _ in frame.bursts]

    def cancel(self, bi: int, j: int, value: int) -> None:
        pos = self.frame.bursts[bi].positions[j]
        self.payload[pos] ^= value
        self.mult[pos] -= 1
        self.occupants[pos].discard((bi, j))
        assert self.mult[pos] >= 0, "cancellation drove multiplicity negative"
        if self.mult[pos] == 0:
            assert self.payload[pos] == 0, "slice payload did not cancel to zero"


def _run_sic(frame: FrameGraph, max_iters: int) -> tuple[_SicState, int, dict[int, int]]:
    st = _SicState(frame)
    bursts = frame.bursts
    done_at: dict[int, int] = {}
    singles = [s for s, m in enumerate(st.mult) if m == 1]
    it = 0
    while singles and it < max_iters:
        it += 1
        # harvest every clean slice seen at the start of this round
        fresh: dict[int, dict[int, int]] = {}
        for s in singles:
            if st.mult[s] != 1:
                continue
            (bi, j), = st.occupants[s]
            fresh.setdefault(bi, {})[j] = st.payload[s]
        # per-burst erasure decoding
        for bi, got in fresh.items():
            b = bursts[bi]
            known = st.known[bi]
            known.update(got)
            if b.is_mds:
                extra = (
                    {j: b.segments[j] for j in range(b.n) if j not in known}
                    if len(known) >= b.k else {}
                )
            else:
                extra = map_erasure_decode(b.code, known) if len(known) < b.n else {}
            known.update(extra)
            got.update(extra)
            if len(known) == b.n:
                done_at[bi] = it
        # interference subtraction
        touched = []
        for bi, got in fresh.items():
            for j, value in got.items():
                st.cancel(bi, j, value)
                touched.append(bursts[bi].positions[j])
        singles = sorted({s for s in touched if st.mult[s] == 1})
    return st, it, done_at


def sic_decode(frame: FrameGraph, max_iters: int = SIC_MAX_ITERS) -> DecodeOutcome:
    """Iterative clean-slice harvesting, per-burst MAP erasure decoding and
    interference subtraction, all clean slices of a round processed together."""
    st, it, done_at = _run_sic(frame, max_iters)
    status, infos = [], []
    for bi, b in enumerate(frame.bursts):
        known = st.known[bi]
        if len(known) == b.n:
            if b.is_mds:
                info = tuple(known[j] for j in range(b.k))
            else:
                info = tuple(solve_information(b.code, known))
            status.append(RECOVERED)
            infos.append(info)
        else:
            status.append(LOST)
            infos.append(None)
    residual = sum(1 for m in st.mult if m > 0)
    return DecodeOutcome(status, infos, it, residual, done_at)


def _eliminate(equations: list[tuple[int, int]]) -> dict[int, tuple[int, int]]:
    """Reduced row echelon form of GF(2) rows ``(mask, rhs)``, keyed by top bit."""
    piv: dict[int, tuple[int, int]] = {}
    for mask, rhs in equations:
        while mask:
            top = mask.bit_length() - 1
            if top not in piv:
                piv[top] = (mask, rhs)
                break
            pm, pr = piv[top]
            mask ^= pm
            rhs ^= pr
        else:
            assert rhs == 0, "inconsistent linear system"
    pivmask = 0
    for top in sorted(piv):
        mask, rhs = piv[top]
        others = mask & pivmask
        while others:
            b = others.bit_length() - 1
            bm, br = piv[b]
            mask ^= bm
            rhs ^= br
            others = mask & pivmask
        piv[top] = (mask, rhs)
        pivmask |= 1 << top
    return piv


def genie_decode(frame: FrameGraph, presolve: bool = False) -> DecodeOutcome:
    """Solve the frame's GF(2) system by Gaussian elimination.

    Unknowns are all information segments; every non-empty slice is one
    equation. A user is recovered iff all its unknowns are determined. With
    ``presolve`` the system is first reduced by interference subtraction,
    which does not change its solution set.
    """
    if any(b.is_mds for b in frame.bursts):
        raise ValueError("genie decoding needs binary component codes (MDS entries present)")
    k = frame.k
    bursts = frame.bursts
    status: list[str] = [LOST] * len(bursts)
    infos: list[tuple[int, ...] | None] = [None] * len(bursts)
    iterations = 0
    if presolve:
        st, iterations, _ = _run_sic(frame, 10**9)
        payload, occupants, known = st.payload, st.occupants, st.known
        for bi, b in enumerate(bursts):
            if len(known[bi]) == b.n:
                status[bi] = RECOVERED
                infos[bi] = tuple(solve_information(b.code, known[bi]))
    else:
        payload = frame.slice_payload
        occupants = [set(s) for s in frame.incidence()]
        known = [{} for _ in bursts]

    eqs = []
    for s, occ in enumerate(occupants):
        if occ:
            mask = 0
            for bi, j in occ:
                mask ^= bursts[bi].code.columns[j] << (bi * k)
            eqs.append((mask, payload[s]))
    for bi, got in enumerate(known):
        if status[bi] == LOST:
            for j, value in got.items():
                eqs.append((bursts[bi].code.columns[j] << (bi * k), value))
    piv = _eliminate(eqs)

    for bi in range(len(bursts)):
        if status[bi] == RECOVERED:
            continue
        vals = []
        for i in range(k):
            x = bi * k + i
            row = piv.get(x)
            if row is None or row[0] != 1 << x:
                break
            vals.append(row[1])
        else:
            status[bi] = RECOVERED
            infos[bi] = tuple(vals)
    residual = sum(1 for occ in occupants if occ)
    return DecodeOutcome(status, infos, iterations, residual)


def verify_outcome(frame: FrameGraph, outcome: DecodeOutcome) -> bool:
    """Every recovered user's information segments match bit-exactly."""
    return all(
        outcome.info[i] == frame.bursts[i].info
        for i, s in enumerate(outcome.status)
        if s == RECOVERED
    )


# ---------------------------------------------------------------- campaigns

DECODERS = ("sic", "genie", "both")


@dataclass
class CampaignConfig:
    M: int
    distribution: Any
    loads: list[float]
    frames_per_point: int
    mode: str = "fixed"
    N: int | None = None
    decoder: str = "sic"
    seed: int = 0
    max_iters: int = SIC_MAX_ITERS
    payload_bytes: int = PAYLOAD_BYTES
    k: int | None = None

    @classmethod
    def from_dict(cls, doc: dict[str, Any], base: Path | None = None) -> "CampaignConfig":
        try:
            dist = doc["distribution"]
            if isinstance(dist, str):
                path = Path(dist)
                if base is not None and not path.is_absolute():
                    path = base / path
                dist = json.loads(path.read_text())
            loads = doc.get("loads", doc.get("load_grid"))
            if loads is None:
                raise KeyError("loads")
            cfg = cls(
                M=int(doc["M"]),
                distribution=dist,
                loads=[float(x) for x in loads],
                frames_per_point=int(doc["frames_per_point"]),
                mode=doc.get("mode", "fixed"),
                N=None if doc.get("N") is None else int(doc["N"]),
                decoder=doc.get("decoder", "sic"),
                seed=int(doc.get("seed", 0)),
                max_iters=int(doc.get("max_iters", SIC_MAX_ITERS)),
                payload_bytes=int(doc.get("payload_bytes", PAYLOAD_BYTES)),
                k=None if doc.get("k") is None else int(doc["k"]),
            )
        except (KeyError, TypeError) as exc:
            raise DistributionError(f"campaign config missing or bad field {exc}") from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.M < 1 or self.frames_per_point < 1:
            raise DistributionError("M and frames_per_point must be >= 1")
        if self.mode not in ("fixed", "bernoulli"):
            raise DistributionError(f"unknown mode {self.mode!r}")
        if self.decoder not in DECODERS:
            raise DistributionError(f"unknown decoder {self.decoder!r}")
        if self.mode == "bernoulli" and (self.N is None or self.N < 1):
            raise DistributionError("bernoulli mode needs N >= 1")
        for G in self.loads:
            if G < 0:
                raise DistributionError(f"negative load {G}")
            if self.mode == "bernoulli" and G * self.M > self.N:
                raise DistributionError(f"load {G} needs more than N={self.N} users")

    def build_distribution(self) -> ComponentDistribution:
        dist = (
            self.distribution
            if isinstance(self.distribution, ComponentDistribution)
            else distribution_from_json(self.distribution)
        )
        if self.k is not None and dist.k != self.k:
            raise DistributionError(f"config k={self.k} but distribution has k={dist.k}")
        return dist

    def activation(self, G: float) -> tuple:
        if self.mode == "fixed":
            return ("fixed", int(round(G * self.M)))
        return ("bernoulli", G * self.M / self.N, self.N)


@dataclass
class PointStats:
    """Integer sums over frames for one load point and decoder."""

    load: float
    decoder: str
    frames: int = 0
    active: int = 0
    recovered: int = 0
    recovered_sq: int = 0
    lost_sq: int = 0
    active_sq: int = 0
    lost_active: int = 0
    iterations: int = 0

    def add(self, active: int, recovered: int, iterations: int) -> None:
        lost = active - recovered
        self.frames += 1
        self.active += active
        self.recovered += recovered
        self.recovered_sq += recovered * recovered
        self.lost_sq += lost * lost
        self.active_sq += active * active
        self.lost_active += lost * active
        self.iterations += iterations

    def merge(self, other: "PointStats") -> None:
        for name in ("frames", "active", "recovered", "recovered_sq", "lost_sq",
                     "active_sq", "lost_active", "iterations"):
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass
class PointResult:
    load: float
    decoder: str
    offered: float
    S: float
    S_ci_half: float
    plr: float
    ci_half: float
    iters_mean: float
    frames: int


def summarize(st: PointStats, M: int) -> PointResult:
    F = st.frames
    S = st.recovered / (F * M)
    var_r = (st.recovered_sq - st.recovered**2 / F) / max(F - 1, 1)
    s_ci = 1.96 * math.sqrt(max(var_r, 0.0) / F) / M
    offered = st.active / (F * M)
    if st.active:
        plr = 1.0 - st.recovered / st.active
        # delta method for the ratio of per-frame sums
        a_bar = st.active / F
        resid_sq = st.lost_sq - 2 * plr * st.lost_active + plr * plr * st.active_sq
        var = max(resid_sq, 0.0) / max(F - 1, 1)
        ci = 1.96 * math.sqrt(var / F) / a_bar
    else:
        plr, ci = 0.0, 0.0
    return PointResult(st.load, st.decoder, offered, S, s_ci, plr, ci, st.iterations / F, F)


@dataclass
class CampaignReport:
    M: int
    seed: int
    points: list[PointResult]

    def to_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["load", "decoder", "offered", "S", "S_ci_half", "PLR", "ci_half", "iters_mean", "frames"])
        for p in self.points:
            w.writerow([f"{p.load:.6g}", p.decoder, f"{p.offered:.6g}", f"{p.S:.6g}",
                        f"{p.S_ci_half:.6g}", f"{p.plr:.6g}", f"{p.ci_half:.6g}",
                        f"{p.iters_mean:.6g}", p.frames])
        return buf.getvalue()

    def to_dict(self) -> dict[str, Any]:
        return {"M": self.M, "seed": self.seed, "points": [asdict(p) for p in self.points]}


def frame_seed(master: int, point: int, frame: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(point, frame))


def _simulate_chunk(args: tuple) -> list[tuple[str, int, int, int]]:
    cfg, dist, point, G, start, stop = args
    decoders = ("sic", "genie") if cfg.decoder == "both" else (cfg.decoder,)
    out = []
    for f in range(start, stop):
        rng = np.random.default_rng(frame_seed(cfg.seed, point, f))
        frame = generate_frame(cfg.M, dist.k, dist, cfg.activation(G), rng, cfg.payload_bytes)
        for dec in decoders:
            if dec == "sic":
                res = sic_decode(frame, cfg.max_iters)
            else:
                res = genie_decode(frame, presolve=True)
            if not verify_outcome(frame, res):
                raise AssertionError("recovered payload mismatch")
            out.append((dec, frame.active, res.recovered, res.iterations))
    return out


def run_campaign(cfg: CampaignConfig, workers: int = 1, chunk: int = 50) -> CampaignReport:
    """Simulate every load point; identical output for any worker count."""
    cfg.validate()
    dist = cfg.build_distribution()
    decoders = ("sic", "genie") if cfg.decoder == "both" else (cfg.decoder,)
    jobs = []
    for pi, G in enumerate(cfg.loads):
        for start in range(0, cfg.frames_per_point, chunk):
            jobs.append((cfg, dist, pi, G, start, min(start + chunk, cfg.frames_per_point)))
    stats = {
        (pi, dec): PointStats(G, dec) for pi, G in enumerate(cfg.loads) for dec in decoders
    }
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_chunk, jobs))
    else:
        results = [_simulate_chunk(j) for j in jobs]
    for job, rows in zip(jobs, results):
        for dec, active, rec, iters in rows:
            stats[(job[2], dec)].add(active, rec, iters)
    points = [summarize(stats[(pi, dec)], cfg.M) for pi in range(len(cfg.loads)) for dec in decoders]
    return CampaignReport(cfg.M, cfg.seed, points)
