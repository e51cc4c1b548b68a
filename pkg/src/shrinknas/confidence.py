"""Exact binomial-tail confidence for multi-path good/weak sampling.

Of m uniformly sampled paths, at least k are good with probability
sum_{j=k}^{m} C(m,j) p^j (1-p)^(m-j) where p is the good-path prior.
The weak-path variant substitutes q = 1 - p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction


@dataclass(frozen=True)
class ConfidenceQuery:
    m: int  # sample count
    k: int  # threshold count
    p: float  # good-path prior

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be positive, got {self.m}")
        if not 0 <= self.k <= self.m:
            raise ValueError(f"k must satisfy 0 <= k <= m, got k={self.k}, m={self.m}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"prior must be in [0, 1], got {self.p}")


def binomial_tail(m, k, p):
    """P(X >= k) for X ~ Binomial(m, p), via log-gamma terms and fsum.

    Stable for the full p range; no normal approximation anywhere.
    """
    if k <= 0:
        return 1.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    log_p = math.log(p)
    log_1p = math.log1p(-p)
    lg_m = math.lgamma(m + 1)
    terms = [
        math.exp(lg_m - math.lgamma(j + 1) - math.lgamma(m - j + 1) + j * log_p + (m - j) * log_1p)
        for j in range(k, m + 1)
    ]
    return min(1.0, math.fsum(terms))


def binomial_tail_exact(m, k, p):
    """Rational-arithmetic tail; exact when p is a Fraction. Cross-check route."""
    if k <= 0:
        return Fraction(1)
    pf = Fraction(p).limit_denominator(10**12) if not isinstance(p, Fraction) else p
    total = Fraction(0)
    for j in range(k, m + 1):
        total += math.comb(m, j) * pf**j * (1 - pf) ** (m - j)
    return total


def confidence_good(query):
    """Confidence that at least k of m sampled paths are good, prior p."""
    return binomial_tail(query.m, query.k, query.p)


def confidence_weak(query):
    """Same tail with the weak prior q = 1 - p substituted for p.

    The query's `p` field holds q directly.
    """
    return binomial_tail(query.m, query.k, query.p)


def confidence_curve(m, k, num_points=101):
    """(p, P_good, Q_weak) rows over a uniform p grid, for curve plots."""
    rows = []
    for i in range(num_points):
        p = i / (num_points - 1)
        rows.append((p, binomial_tail(m, k, p), binomial_tail(m, k, 1.0 - p)))
    return rows
