from __future__ import annotations

import itertools

import numpy as np
from hypothesis import HealthCheck, settings, strategies as st

from csa.gf2codes import BinaryLinearCode, CodeError

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def rows_from_columns(k: int, cols) -> tuple[int, ...]:
    return tuple(sum(((int(c) >> i) & 1) << j for j, c in enumerate(cols)) for i in range(k))


@st.composite
def admitted_codes(draw, max_k: int = 4, max_n: int = 10):
    """Full-rank codes with no zero column and minimum distance >= 2."""
    k = draw(st.integers(1, max_k))
    n = draw(st.integers(k + 1, max(k + 1, max_n)))
    cols = draw(st.lists(st.integers(1, (1 << k) - 1), min_size=n, max_size=n))
    try:
        code = BinaryLinearCode(n, rows_from_columns(k, cols))
    except CodeError:
        code = None
    if code is None or code.d_min < 2:
        # the (k+1, k) parity check is always admissible
        return BinaryLinearCode.spc(k)
    return code


def brute_codewords(code: BinaryLinearCode) -> list[int]:
    words = []
    for msg in itertools.product((0, 1), repeat=code.k):
        w = 0
        for bit, row in zip(msg, code.rows):
            if bit:
                w ^= row
        words.append(w)
    return words


def random_admitted(rng: np.random.Generator, k: int, n: int) -> BinaryLinearCode:
    while True:
        cols = rng.integers(1, 1 << k, size=n)
        try:
            code = BinaryLinearCode(n, rows_from_columns(k, cols))
        except CodeError:
            continue
        if code.d_min >= 2:
            return code
