"""Exact and floating-point special-function kernels.

Exact kernels (ballot function, Catalan numbers, the terminating
hypergeometric sum) work in integer / rational arithmetic and convert to
float only at the boundary. Modified Bessel functions of order 0 and 1 are
evaluated either by their power series or, for large arguments, in
exponentially scaled form by the standard asymptotic expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np
from scipy import integrate

__all__ = [
    "BesselPair",
    "ballot_F",
    "ballot_F_float",
    "ballot_F_table",
    "catalan",
    "catalan_alternating_sum",
    "bessel_I",
    "bessel_pair",
    "bessel_I2",
    "hyp2f1_terminating",
    "hyp2f1_terminating_exact",
    "euler_integral_check",
    "SERIES_CUTOFF",
]

# Above this argument the power series is replaced by the scaled asymptotic expansion.
SERIES_CUTOFF = 20.0

_SERIES_RTOL = 1e-17


def ballot_F(m: int) -> Fraction:
    """Probability that a symmetric +-1 walk of length ``m`` never goes negative.

    Equal to ``binom(m, m // 2) / 2**m``, returned exactly.
    """
    if m < 0:
        raise ValueError(f"m must be non-negative, got {m}")
    return Fraction(math.comb(m, m // 2), 2**m)


def ballot_F_float(m: int) -> float:
    return float(ballot_F(m))


def ballot_F_table(n: int) -> np.ndarray:
    """Float values F(0), ..., F(n) via F(2j) = F(2j-1) and F(2j+1) = F(2j)(2j+1)/(2j+2)."""
    out = np.empty(n + 1)
    out[0] = 1.0
    for m in range(1, n + 1):
        if m % 2:
            out[m] = out[m - 1] * m / (m + 1)
        else:
            out[m] = out[m - 1]
    return out


def catalan(k: int) -> int:
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    return math.comb(2 * k, k) // (k + 1)


def catalan_alternating_sum(k: int) -> int:
    """Evaluate sum_j (-1)^j 2^(k-j) binom(k, j) binom(j, floor(j/2)) in integers."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    return sum(
        (-1) ** j * 2 ** (k - j) * math.comb(k, j) * math.comb(j, j // 2)
        for j in range(k + 1)
    )


@dataclass(frozen=True)
class BesselPair:
    """Values of I0 and I1 at ``z``; when ``scaled`` both carry the factor exp(-z)."""

    z: float
    i0: float
    i1: float
    scaled: bool = False


def _series(order: int, z: float) -> float:
    half = 0.5 * z
    term = half**order / math.factorial(order)
    total = term
    q = half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + order))
        total += term
        if term <= _SERIES_RTOL * total:
            return total


def _scaled_asymptotic(order: int, z: float) -> float:
    mu = 4.0 * order * order
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        nxt = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        if abs(nxt) >= abs(term):
            # divergent tail of the asymptotic series: stop at the smallest term
            break
        term = nxt
        total += term
        if abs(term) < _SERIES_RTOL * abs(total):
            break
    return total / math.sqrt(2.0 * math.pi * z)


def bessel_I(order: int, z: float, scaled: bool = False) -> float:
    """Modified Bessel function of the first kind, orders 0 and 1.

    With ``scaled=True`` returns ``exp(-z) * I_order(z)``, which never
    overflows. The unscaled value raises ``OverflowError`` once it exceeds
    the double range (z around 713).
    """
    if order not in (0, 1):
        raise ValueError(f"only orders 0 and 1 are supported, got {order}")
    z = float(z)
    if not z >= 0.0:
        raise ValueError(f"z must be non-negative, got {z}")
    if z <= SERIES_CUTOFF:
        value = _series(order, z)
        return value * math.exp(-z) if scaled else value
    value = _scaled_asymptotic(order, z)
    if scaled:
        return value
    half = math.exp(0.5 * z)
    out = half * value * half
    if math.isinf(out):
        raise OverflowError(f"I_{order}({z}) exceeds the double range; use scaled=True")
    return out


def bessel_pair(z: float, scaled: bool = False) -> BesselPair:
    return BesselPair(z=float(z), i0=bessel_I(0, z, scaled), i1=bessel_I(1, z, scaled), scaled=scaled)


def bessel_I2(z: float, scaled: bool = False) -> float:
    """I2 via the three-term recurrence I2 = I0 - (2/z) I1."""
    if z <= 0:
        raise ValueError("bessel_I2 needs z > 0")
    pair = bessel_pair(z, scaled)
    return pair.i0 - (2.0 / z) * pair.i1


def _check_u(u) -> Fraction:
    fu = Fraction(u) if isinstance(u, Rational) else Fraction(float(u))
    if not 0 <= fu <= Fraction(1, 2):
        raise ValueError(f"u must lie in [0, 1/2], got {u}")
    return fu


def hyp2f1_terminating_exact(n: int, u) -> Fraction:
    """Exact value of sum_{k<=n} (-1)^k/(k+1) binom(2k,k) binom(n,k) (u/2)^k.

    ``u`` is taken as the exact rational it represents (floats are dyadic).
    The sum is accumulated over the common denominator (2b)^n where u = a/b,
    using that binom(2k,k)/(k+1) is the integer Catalan number.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    fu = _check_u(u)
    a, b = fu.numerator, 2 * fu.denominator
    b_pows = [1] * (n + 1)
    for i in range(1, n + 1):
        b_pows[i] = b_pows[i - 1] * b
    total = 0
    cat = 1
    binom = 1
    a_pow = 1
    for k in range(n + 1):
        term = cat * binom * a_pow * b_pows[n - k]
        total += -term if k % 2 else term
        cat = cat * 2 * (2 * k + 1) // (k + 2)
        binom = binom * (n - k) // (k + 1)
        a_pow *= a
    return Fraction(total, b_pows[n])


def hyp2f1_terminating(n: int, u) -> float:
    """Float value of 2F1(-n, 1/2; 2; 2u), i.e. E[F(S)] for S ~ Binomial(n, u)."""
    return float(hyp2f1_terminating_exact(n, u))


def euler_integral_check(n: int, u: float) -> float:
    """(2/pi) int_0^1 t^(-1/2) (1-t)^(1/2) (1-2ut)^n dt by adaptive Gauss-Kronrod.

    The substitution t = s^2 removes the endpoint singularity, leaving
    (4/pi) int_0^1 sqrt(1-s^2) (1-2us^2)^n ds.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0.0 < u <= 0.5:
        raise ValueError(f"u must lie in (0, 1/2], got {u}")

    def integrand(s: float) -> float:
        return math.sqrt(max(1.0 - s * s, 0.0)) * (1.0 - 2.0 * u * s * s) ** n

    value, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-10, epsrel=1e-12, limit=200)
    return 4.0 / math.pi * value
