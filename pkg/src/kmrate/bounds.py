"""Rate-bound machinery for the Krasnosel'skii-Mann iteration.

For a step schedule alpha_1..alpha_n the residual ||x_n - T x_n|| is bounded
(with diam C = 1) by

    P^n = c_{n,n+1} / alpha_{n+1} = E[F(M)],

where c_{mn} solves the double-sum recursion over the weights
pi_k^n = alpha_k prod_{j=k+1}^n (1 - alpha_j), F is the ballot function and
M is a sum of independent Bernoulli(2 alpha_i (1 - alpha_i)). The constant
1/sqrt(pi) caps sqrt(sum alpha_i (1 - alpha_i)) * P^n; ``h_envelope`` and
``equal_prob_curve`` are the two extremal families used to establish it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .schedule import StepSchedule
from .special_fn import ballot_F_table, bessel_I, hyp2f1_terminating
from .stochastic import RngStream, as_probs, poisson_binomial_pmf, simulate_walk_nonneg

__all__ = [
    "StepSchedule",
    "BoundTable",
    "RateReport",
    "Constants",
    "RnMaximum",
    "KAPPA",
    "SQRT_2_OVER_PI",
    "BOUND_TOL",
    "weights",
    "c_table",
    "recurrence_check",
    "pn_recursion",
    "pn_exact",
    "rate_report",
    "rn_value",
    "rn_maximize",
    "coordinate_clusters",
    "equal_prob_curve",
    "h_envelope",
    "constants",
    "golden_section_max",
]

KAPPA = 1.0 / math.sqrt(math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
BOUND_TOL = 1e-10

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def weights(sched: StepSchedule | Sequence[float], n: int) -> np.ndarray:
    """(pi_0^n, ..., pi_n^n) with pi_k^n = alpha_k prod_{j=k+1}^n (1 - alpha_j), alpha_0 = 1."""
    sched = StepSchedule.of(sched)
    a = sched.with_zero(n)
    suffix = np.ones(n + 1)
    for k in range(n - 1, -1, -1):
        suffix[k] = suffix[k + 1] * (1.0 - a[k + 1])
    return a * suffix


@dataclass(frozen=True, eq=False)
class BoundTable:
    """Triangle c_{mn}, -1 <= m <= n <= n_max; ``entries[m + 1, n]`` holds c_{mn}.

    Cells with m > n are NaN.
    """

    n_max: int
    entries: np.ndarray
    method: str = "reference"

    def c(self, m: int, n: int) -> float:
        if not (-1 <= m <= n <= self.n_max):
            raise IndexError(f"c[{m},{n}] outside the table (n_max={self.n_max})")
        return float(self.entries[m + 1, n])

    def rows(self):
        """Yield (m, n, c_mn) in order of increasing n, then m."""
        for n in range(self.n_max + 1):
            for m in range(-1, n + 1):
                yield m, n, float(self.entries[m + 1, n])


def c_table(sched: StepSchedule | Sequence[float], n_max: int, method: str = "reference") -> BoundTable:
    """Fill the c_{mn} triangle.

    ``reference`` evaluates the defining double sum
    c_{mn} = sum_{j<=m} sum_{m<k<=n} pi_j^m pi_k^n c_{j-1,k-1} directly (O(n^4));
    ``fast`` uses the three-term recurrence
    c_{mn} = a'_m c_{m-1,n} + a'_n c_{m,n-1} + (a_n a_m - a'_n a'_m) c_{m-1,n-1}
    with a' = 1 - a and alpha_0 = 1 (O(n^2)).
    """
    sched = StepSchedule.of(sched)
    sched.require(n_max)
    C = np.full((n_max + 2, n_max + 1), np.nan)
    C[0, :] = 1.0
    if method == "reference":
        W = [weights(sched, n) for n in range(n_max + 1)]
        for n in range(n_max + 1):
            C[n + 1, n] = 0.0
            wn = W[n]
            for m in range(n):
                C[m + 1, n] = W[m] @ C[0 : m + 1, m:n] @ wn[m + 1 : n + 1]
    elif method == "fast":
        a = sched.with_zero(n_max)
        for n in range(n_max + 1):
            C[n + 1, n] = 0.0
            an = a[n]
            for m in range(n):
                am = a[m]
                C[m + 1, n] = (
                    (1.0 - am) * C[m, n]
                    + (1.0 - an) * C[m + 1, n - 1]
                    + (an * am - (1.0 - an) * (1.0 - am)) * C[m, n - 1]
                )
    else:
        raise ValueError(f"unknown method {method!r}")
    C.setflags(write=False)
    return BoundTable(n_max, C, method)


def recurrence_check(table: BoundTable, sched: StepSchedule | Sequence[float]) -> float:
    """Largest violation of the three-term recurrence over 1 <= m < n <= n_max."""
    sched = StepSchedule.of(sched)
    a = sched.with_zero(table.n_max)
    C = table.entries
    worst = 0.0
    for n in range(2, table.n_max + 1):
        m = np.arange(1, n)
        am, an = a[m], a[n]
        rhs = (1.0 - am) * C[m, n] + (1.0 - an) * C[m + 1, n - 1] + (an * am - (1.0 - an) * (1.0 - am)) * C[m, n - 1]
        worst = max(worst, float(np.max(np.abs(C[m + 1, n] - rhs))))
    return worst


def pn_recursion(sched: StepSchedule | Sequence[float], n: int, method: str = "reference") -> float:
    """P^n = c_{n,n+1} / alpha_{n+1} from the c-table.

    Raises ``ZeroDivisionError`` when alpha_{n+1} = 0; use ``pn_exact`` then.
    """
    sched = StepSchedule.of(sched)
    sched.require(n + 1)
    a_next = sched.alpha(n + 1)
    if a_next == 0.0:
        raise ZeroDivisionError("alpha_{n+1} = 0: the recursion route is 0/0, use pn_exact")
    return c_table(sched.head(n + 1), n + 1, method).c(n, n + 1) / a_next


def pn_exact(sched: StepSchedule | Sequence[float], n: int) -> float:
    """P^n = E[F(M)], M a sum of Bernoulli(2 alpha_i (1 - alpha_i)), i <= n."""
    sched = StepSchedule.of(sched)
    sched.require(n)
    law = poisson_binomial_pmf(sched.p[:n])
    return float(np.dot(law.pmf, ballot_F_table(n)))


@dataclass(frozen=True)
class RateReport:
    n: int
    sum_s: float
    pn: float
    product: float
    bound_ok: bool
    method: str = "exact"
    std_err: float | None = None


def rate_report(
    sched: StepSchedule | Sequence[float],
    n: int,
    method: str = "exact",
    trials: int = 100_000,
    rng: RngStream | None = None,
) -> RateReport:
    """Assemble sqrt(sum_{i<=n} alpha_i (1 - alpha_i)) * P^n and test it against 1/sqrt(pi).

    With ``method="mc"`` the bound is tested at the lower edge of a
    4-standard-error band so sampling noise alone cannot flag a violation.
    """
    sched = StepSchedule.of(sched)
    sched.require(n)
    sum_s = sched.sum_s(n)
    std_err = None
    if method == "exact":
        pn = pn_exact(sched, n)
    elif method == "recursion":
        if n + 1 <= len(sched) and sched.alpha(n + 1) > 0.0:
            pn = pn_recursion(sched, n)
        else:
            pn = pn_exact(sched, n)
            method = "exact-fallback"
    elif method == "mc":
        est = simulate_walk_nonneg(sched, n, trials, rng or RngStream(0))
        pn, std_err = est.estimate, est.std_err
    else:
        raise ValueError(f"unknown method {method!r}")
    product = math.sqrt(sum_s) * pn
    tested = product - 4.0 * std_err * math.sqrt(sum_s) if std_err is not None else product
    return RateReport(n, sum_s, pn, product, tested <= KAPPA + BOUND_TOL, method, std_err)


def _rn(probs: np.ndarray, ftab: np.ndarray) -> float:
    law = poisson_binomial_pmf(probs)
    return math.sqrt(float(probs.sum())) * float(np.dot(law.pmf, ftab[: probs.size + 1]))


def rn_value(p: Sequence[float]) -> float:
    """R^n(p) = sqrt(p_1 + ... + p_n) * E[F(M_1 + ... + M_n)], each p_i in [0, 1/2]."""
    probs = as_probs(p)
    if probs.size and probs.max() > 0.5:
        raise ValueError("R^n is defined for p_i in [0, 1/2]")
    return _rn(probs, ballot_F_table(probs.size))


def golden_section_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> tuple[float, float]:
    """Maximize a unimodal ``f`` on [lo, hi]; returns (argmax, max)."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


class RnMaximum(NamedTuple):
    argmax: np.ndarray
    value: float


def rn_maximize(n: int, grid_steps: int = 50, starts: int = 8, seed: int = 0) -> RnMaximum:
    """Multi-start coordinate ascent for max R^n(p) over [0, 1/2]^n.

    Each coordinate update scans the grid of ``grid_steps`` cells to bracket
    the maximum, then refines it by golden section. Starts are the diagonal
    points of the grid plus ``starts`` random grid points (seeded).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if grid_steps < 2:
        raise ValueError("grid_steps must be at least 2")
    ftab = ballot_F_table(n)
    grid = np.linspace(0.0, 0.5, grid_steps + 1)
    gen = np.random.default_rng(seed)
    diag = np.unique(np.linspace(1, grid_steps, min(5, grid_steps)).astype(int))
    initial = [np.full(n, grid[i]) for i in diag]
    initial += [grid[gen.integers(0, grid_steps + 1, size=n)] for _ in range(starts)]

    def value_at(p: np.ndarray, i: int, x: float) -> float:
        q = p.copy()
        q[i] = x
        return _rn(q, ftab)

    best_p, best_v = None, -math.inf
    for p in initial:
        p = p.astype(float)
        cur = _rn(p, ftab)
        for _ in range(200):
            prev = cur
            for i in range(n):
                scan = np.array([value_at(p, i, x) for x in grid])
                j = int(np.argmax(scan))
                x, v = golden_section_max(
                    lambda t: value_at(p, i, t), grid[max(j - 1, 0)], grid[min(j + 1, grid_steps)], 1e-12
                )
                if scan[j] >= v:
                    x, v = grid[j], scan[j]
                if v > cur:
                    p[i], cur = x, v
            if cur - prev <= 1e-15:
                break
        if cur > best_v:
            best_p, best_v = p.copy(), cur
    return RnMaximum(best_p, best_v)


def coordinate_clusters(p: Sequence[float], tol: float = 1e-4) -> tuple[int, list[float], int]:
    """Snap coordinates: (count near 0, interior cluster centers, count near 1/2)."""
    arr = np.sort(np.asarray(p, dtype=float))
    zeros = int(np.count_nonzero(arr <= tol))
    halves = int(np.count_nonzero(arr >= 0.5 - tol))
    interior = arr[(arr > tol) & (arr < 0.5 - tol)]
    clusters: list[list[float]] = []
    for x in interior:
        if clusters and x - clusters[-1][-1] <= tol:
            clusters[-1].append(x)
        else:
            clusters.append([x])
    return zeros, [float(np.mean(c)) for c in clusters], halves


def equal_prob_curve(u: float, n_max: int, method: str = "pmf") -> np.ndarray:
    """sqrt(n u) E[F(S_n)], S_n ~ Binomial(n, u), for n = 1..n_max.

    ``pmf`` updates the binomial law one trial at a time (positive terms
    only, so no cancellation); ``exact`` evaluates the closed-form sum in
    rational arithmetic for each n, which is much slower for non-dyadic u.
    """
    if not 0.0 < u <= 0.5:
        raise ValueError(f"u must lie in (0, 1/2], got {u}")
    if method == "exact":
        return np.array([math.sqrt(n * u) * hyp2f1_terminating(n, u) for n in range(1, n_max + 1)])
    if method != "pmf":
        raise ValueError(f"unknown method {method!r}")
    F = ballot_F_table(n_max)
    pmf = np.zeros(n_max + 1)
    pmf[0] = 1.0
    out = np.empty(n_max)
    for n in range(1, n_max + 1):
        pmf[1 : n + 1] = pmf[1 : n + 1] * (1.0 - u) + pmf[:n] * u
        pmf[0] *= 1.0 - u
        out[n - 1] = math.sqrt(n * u) * float(pmf[: n + 1] @ F[: n + 1])
    return out


def h_envelope(z: float) -> float:
    """sqrt(z + 1/2) exp(-z) [I0(z) + (1 - 1/(2z)) I1(z)], from scaled Bessel values."""
    if not z > 0.0:
        raise ValueError(f"z must be positive, got {z}")
    i0 = bessel_I(0, z, scaled=True)
    i1 = bessel_I(1, z, scaled=True)
    return math.sqrt(z + 0.5) * (i0 + (1.0 - 0.5 / z) * i1)


class Constants(NamedTuple):
    kappa: float
    sqrt_2_over_pi: float
    eta: float
    eta_argmax: float


def _eta_objective(x: float) -> float:
    return math.sqrt(x) * bessel_I(0, x, scaled=True)


@lru_cache(maxsize=1)
def constants() -> Constants:
    """kappa = 1/sqrt(pi), sqrt(2/pi), and eta = max_x sqrt(x) exp(-x) I0(x).

    eta is located by golden section on [0.1, 10] after confirming on a grid
    that the objective increases then decreases there.
    """
    xs = np.linspace(0.1, 10.0, 2001)
    diffs = np.diff([_eta_objective(x) for x in xs])
    changes = np.count_nonzero(np.diff(np.sign(diffs)) != 0)
    if changes != 1 or diffs[0] <= 0 or diffs[-1] >= 0:
        raise RuntimeError("eta objective is not unimodal on [0.1, 10]")
    x_star, eta = golden_section_max(_eta_objective, 0.1, 10.0, 1e-10)
    return Constants(KAPPA, SQRT_2_OVER_PI, eta, x_star)
