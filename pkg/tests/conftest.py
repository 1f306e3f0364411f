"""Brute-force oracles shared by the test modules.

Everything here is deliberately independent of the library: plain
enumeration over outcomes, no convolution, no closed forms.
"""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def enumerate_bernoulli_sum(p):
    """Law of sum of independent Bernoulli(p_i) by walking all 2^n outcomes."""
    n = len(p)
    pmf = [0.0] * (n + 1)
    for bits in itertools.product((0, 1), repeat=n):
        w = 1.0
        for b, q in zip(bits, p):
            w *= q if b else 1.0 - q
        pmf[sum(bits)] += w
    return pmf


def walk_fraction_nonneg(m):
    """Fraction of the 2^m sign sequences whose prefix sums are all >= 0."""
    if m == 0:
        return Fraction(1)
    codes = np.arange(2**m, dtype=np.int64)
    steps = ((codes[:, None] >> np.arange(m)) & 1) * 2 - 1
    ok = np.all(np.cumsum(steps, axis=1) >= 0, axis=1)
    return Fraction(int(ok.sum()), 2**m)


def walk_count_dp(m):
    """Same fraction by counting lattice paths that stay >= 0 (dynamic programming)."""
    counts = {0: 1}
    for _ in range(m):
        nxt = {}
        for h, c in counts.items():
            for s in (-1, 1):
                if h + s >= 0:
                    nxt[h + s] = nxt.get(h + s, 0) + c
        counts = nxt
    return Fraction(sum(counts.values()), 2**m)


def walk_probability(alphas, n):
    """P(sum_{i=k}^n (F_i - H_i) >= 0 for k = n..1) by enumerating all (F, H) outcomes."""
    total = 0.0
    a = alphas[:n]
    for f in itertools.product((0, 1), repeat=n):
        for h in itertools.product((0, 1), repeat=n):
            w = 1.0
            for fi, hi, ai in zip(f, h, a):
                w *= (ai if fi else 1 - ai) * (ai if hi else 1 - ai)
            s, ok = 0, True
            for i in range(n - 1, -1, -1):
                s += f[i] - h[i]
                if s < 0:
                    ok = False
                    break
            if ok:
                total += w
    return total


def fox_hare_probability(alphas, m, n):
    """P(sum_{i=k}^n F_i > sum_{i=k}^m H_i for k = m+1..1) by enumeration."""
    total = 0.0
    for f in itertools.product((0, 1), repeat=n):
        for h in itertools.product((0, 1), repeat=m):
            w = 1.0
            for fi, ai in zip(f, alphas):
                w *= ai if fi else 1 - ai
            for hi, ai in zip(h, alphas):
                w *= ai if hi else 1 - ai
            if all(sum(f[k - 1 :]) > sum(h[k - 1 :]) for k in range(1, m + 2)):
                total += w
    return total


def binomial_expectation(n, u, g):
    return sum(math.comb(n, k) * u**k * (1 - u) ** (n - k) * g(k) for k in range(n + 1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
