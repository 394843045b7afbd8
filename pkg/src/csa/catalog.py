"""Reference component distributions with published thresholds.

Probabilities are stored as printed (six or four decimals), so builders
renormalize sums that are off by rounding.
"""

from __future__ import annotations

from .ensemble import (
    ComponentDistribution,
    ComponentSpec,
    EnsembleExpectation,
    build_distribution,
)

# Repetition-code (k = 1) distributions, keyed by rate: {length: probability}.
IRSA = {
    "1/3": {2: 0.554016, 3: 0.261312, 6: 0.184672},
    "2/5": {2: 0.622412, 3: 0.255176, 4: 0.122412},
    "1/2": {2: 1.0},
}

# Random-code ensembles, {length: probability}.
RANDOM_K2 = {
    "1/3": {3: 0.259929, 4: 0.053247, 5: 0.447058, 11: 0.105258, 12: 0.134509},
    "2/5": {3: 0.304961, 4: 0.144152, 6: 0.347701, 7: 0.203186},
    "1/2": {4: 1.0},
    "3/5": {3: 0.666667, 4: 0.333333},
}
RANDOM_K3 = {
    "1/3": {4: 0.173572, 5: 0.010699, 6: 0.183304, 7: 0.361921, 8: 0.025012, 18: 0.245492},
    "2/5": {5: 0.579066, 10: 0.025606, 11: 0.395328},
    "1/2": {4: 0.045538, 6: 0.863386, 7: 0.091076},
    "3/5": {5: 1.0},
}

# Specific k = 2 generator matrices.
K2_CODES = {
    "3": "110,011",
    "4a": "1100,1111",
    "4b": "1100,0111",
    "5a": "11100,00111",
    "5b": "11110,00011",
    "5c": "11111,00011",
    "6": "111000,001111",
    "7": "1111000,0011111",
    "11": "11110000000,00111111111",
    "12": "111111110000,000001111111",
}
SPECIFIC_K2 = {
    "1/3": {"3": 0.259929, "4a": 0.053247, "5a": 0.259293, "5b": 0.098353,
            "5c": 0.089412, "11": 0.105258, "12": 0.134509},
    "2/5": {"3": 0.304961, "4a": 0.144152, "6": 0.347701, "7": 0.203186},
    "1/2": {"4b": 1.0},
    "3/5": {"3": 0.666667, "4b": 0.333333},
}

# Low-rate repetition distribution over lengths 2..30 (rate 1/5).
IRSA_RATE_1_5 = {
    2: 0.494155, 3: 0.159085, 4: 0.107372, 5: 0.070336, 6: 0.045493, 7: 0.019898,
    11: 0.024098, 12: 0.008636, 13: 0.005940, 15: 0.008749, 18: 0.002225,
    20: 0.001261, 22: 0.002607, 23: 0.008092, 24: 0.002287, 25: 0.012274,
    26: 0.002530, 27: 0.003094, 28: 0.002558, 29: 0.005891, 30: 0.013419,
}
# Repetition lengths 2 and 3 only (rate 5/11).
IRSA_RATE_5_11 = {2: 0.8, 3: 0.2}

# MDS distributions as (k, {redundancy n-k: probability}).
MDS = {
    "k2_r0.400": (2, {1: 0.276023, 2: 0.366641, 3: 0.127979, 7: 0.229357}),
    "k3_r0.502": (3, {1: 0.3222, 2: 0.2305, 4: 0.0491, 5: 0.3983}),
    "k3_r0.599": (3, {1: 0.2589, 2: 0.4826, 3: 0.2586}),
    "k3_r0.667": (3, {1: 0.5005, 2: 0.4995}),
    "k4_r0.667": (4, {1: 0.1892, 2: 0.6240, 3: 0.1868}),
    "k4_r0.727": (4, {1: 0.5000, 2: 0.5000}),
}


def repetition(pmf: dict[int, float]) -> ComponentDistribution:
    return build_distribution(
        [ComponentSpec.repetition(n, p) for n, p in pmf.items()], renormalize=True
    )


def random_codes(
    k: int,
    pmf: dict[int, float],
    expectations: dict[int, EnsembleExpectation] | None = None,
) -> ComponentDistribution:
    expectations = expectations or {}
    return build_distribution(
        [ComponentSpec.random(n, k, p, expectations.get(n)) for n, p in pmf.items()],
        renormalize=True,
    )


def specific_k2(rate: str) -> ComponentDistribution:
    return build_distribution(
        [ComponentSpec.explicit(K2_CODES[name], p) for name, p in SPECIFIC_K2[rate].items()],
        renormalize=True,
    )


def mds(name: str) -> ComponentDistribution:
    k, pmf = MDS[name]
    return build_distribution(
        [ComponentSpec.mds(k + r, k, p) for r, p in pmf.items()], renormalize=True
    )
