"""Discrete distributions, convex-order checks and seeded Monte Carlo.

Exact laws of sums of independent Bernoullis (Poisson-binomial), truncated
Poisson laws, and the Bernoulli-to-Poisson convex majorization
``E[g(S)] <= E[g(Z)]``. Two simulators reproduce the probabilistic
interpretation of the bound recursion: the lazy random walk whose
non-negativity probability is P^n, and the fox-and-hare race whose
safe-burrow probability is c_{mn}.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .schedule import StepSchedule
from .special_fn import ballot_F_float

__all__ = [
    "RngStream",
    "DiscreteDist",
    "ConvexIntFunction",
    "NotConvexError",
    "MajorizationCheck",
    "MonteCarloEstimate",
    "as_probs",
    "poisson_binomial_pmf",
    "poisson_binomial_pmf_exact",
    "poisson_truncated",
    "expect",
    "split_bernoulli",
    "hoeffding_majorization_check",
    "simulate_walk_nonneg",
    "simulate_fox_hare",
]

_MASK64 = (1 << 64) - 1
_CHUNK = 1 << 15
_PMF_SUM_TOL = 1e-12


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by (seed, stream_id).

    Backed by the counter-based Philox generator whose 128-bit key is the
    pair (stream_id, seed), so distinct stream ids give independent streams.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=(self.stream_id << 64) | self.seed))

    def shard(self, count: int) -> list["RngStream"]:
        """Streams for ``count`` parallel shards; a single shard reuses this stream."""
        if count < 1:
            raise ValueError("shard count must be positive")
        if count == 1:
            return [self]
        out = []
        for s in range(count):
            state = np.random.SeedSequence([self.seed, self.stream_id, s]).generate_state(1, np.uint64)
            out.append(RngStream(self.seed, int(state[0])))
        return out


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """Finite law on the integers ``support_offset + k`` for k < len(pmf)."""

    support_offset: int
    pmf: np.ndarray
    truncation: int | None = field(default=None)

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=float).reshape(-1)
        if pmf.size == 0:
            raise ValueError("empty pmf")
        if np.any(pmf < 0.0) or not np.all(np.isfinite(pmf)):
            raise ValueError("pmf entries must be finite and non-negative")
        if abs(pmf.sum() - 1.0) > _PMF_SUM_TOL:
            raise ValueError(f"pmf sums to {pmf.sum()!r}, not 1")
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    def __len__(self) -> int:
        return self.pmf.size

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_offset, self.support_offset + self.pmf.size)

    @property
    def max_support(self) -> int:
        return self.support_offset + self.pmf.size - 1

    def mean(self) -> float:
        return float(np.dot(self.support, self.pmf))

    def prob(self, k: int) -> float:
        i = k - self.support_offset
        return float(self.pmf[i]) if 0 <= i < self.pmf.size else 0.0


class NotConvexError(ValueError):
    """Raised when a function is not (or cannot be) certified convex."""


@dataclass(frozen=True)
class ConvexIntFunction:
    """A function on the non-negative integers with an optional convexity certificate.

    ``horizon`` is the largest argument at which the certificate evaluated g;
    the discrete convexity g(k) <= (g(k-1) + g(k+1)) / 2 was checked for
    1 <= k < horizon.
    """

    evaluator: Callable[[int], float]
    certified_convex: bool = False
    horizon: int = -1
    name: str = "g"

    def __call__(self, k: int) -> float:
        return float(self.evaluator(int(k)))

    def values(self, upto: int) -> np.ndarray:
        return np.array([self(k) for k in range(upto + 1)])

    @classmethod
    def certify(cls, evaluator: Callable[[int], float], horizon: int, name: str = "g") -> "ConvexIntFunction":
        g = cls(evaluator, False, -1, name)
        vals = g.values(horizon)
        second = vals[:-2] - 2.0 * vals[1:-1] + vals[2:]
        tol = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
        if second.size and second.min() < -tol:
            k = int(np.argmin(second)) + 1
            raise NotConvexError(f"{name} is not convex at k={k} (second difference {second.min():.3e})")
        return cls(evaluator, True, horizon, name)

    def ensure(self, horizon: int) -> "ConvexIntFunction":
        """Return a certificate covering ``horizon``, re-checking if the current one is shorter."""
        if not self.certified_convex:
            raise NotConvexError(f"{self.name} carries no convexity certificate")
        if self.horizon >= horizon:
            return self
        return ConvexIntFunction.certify(self.evaluator, horizon, self.name)

    # common convex functions

    @classmethod
    def square(cls, horizon: int = 64) -> "ConvexIntFunction":
        return cls.certify(lambda k: float(k * k), horizon, "k^2")

    @classmethod
    def linear(cls, horizon: int = 64) -> "ConvexIntFunction":
        return cls.certify(float, horizon, "k")

    @classmethod
    def hinge(cls, c: float, horizon: int = 64) -> "ConvexIntFunction":
        return cls.certify(lambda k: max(k - c, 0.0), horizon, f"max(k-{c},0)")

    @classmethod
    def ballot_pair(cls, horizon: int = 64) -> "ConvexIntFunction":
        """g(k) = (F(k) + F(k+1)) / 2 with F the ballot function."""
        return cls.certify(lambda k: 0.5 * (ballot_F_float(k) + ballot_F_float(k + 1)), horizon, "ballot_pair")


class MajorizationCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


class MonteCarloEstimate(NamedTuple):
    estimate: float
    std_err: float
    trials: int


def as_probs(p: Sequence[float]) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("Bernoulli probabilities must lie in [0, 1]")
    return arr


def poisson_binomial_pmf(p: Sequence[float]) -> DiscreteDist:
    """Law of a sum of independent Bernoulli(p_i) by iterative convolution."""
    probs = as_probs(p)
    pmf = np.zeros(probs.size + 1)
    pmf[0] = 1.0
    for i, pi in enumerate(probs, start=1):
        pmf[1 : i + 1] = pmf[1 : i + 1] * (1.0 - pi) + pmf[:i] * pi
        pmf[0] *= 1.0 - pi
    return DiscreteDist(0, pmf)


def poisson_binomial_pmf_exact(p: Sequence) -> list[Fraction]:
    """Same convolution in exact rationals; floats are taken at their exact binary value."""
    probs = [Fraction(x) for x in p]
    if any(not 0 <= x <= 1 for x in probs):
        raise ValueError("Bernoulli probabilities must lie in [0, 1]")
    pmf = [Fraction(1)]
    for pi in probs:
        q = 1 - pi
        nxt = [Fraction(0)] * (len(pmf) + 1)
        for k, w in enumerate(pmf):
            nxt[k] += w * q
            nxt[k + 1] += w * pi
        pmf = nxt
    return pmf


def _poisson_cutoff(z: float, tail_eps: float) -> int:
    # smallest K > z with the Chernoff bound exp(-z) (e z / K)^K < tail_eps
    log_eps = math.log(tail_eps)
    k = math.floor(z) + 1
    while -z + k * (1.0 + math.log(z) - math.log(k)) >= log_eps:
        k += 1
    return k


def poisson_truncated(z: float, tail_eps: float = 1e-12) -> DiscreteDist:
    """Poisson(z) restricted to {0..K}, discarded tail < ``tail_eps``, renormalized.

    The cutoff K is reported as ``truncation`` on the returned distribution.
    """
    if not z >= 0.0:
        raise ValueError(f"Poisson mean must be non-negative, got {z}")
    if not 0.0 < tail_eps <= 1e-6:
        raise ValueError(f"tail_eps must lie in (0, 1e-6], got {tail_eps}")
    if z == 0.0:
        return DiscreteDist(0, np.array([1.0]), truncation=0)
    K = _poisson_cutoff(z, tail_eps)
    k = np.arange(K + 1)
    logpmf = k * math.log(z) - z - np.array([math.lgamma(i + 1.0) for i in k])
    pmf = np.exp(logpmf)
    return DiscreteDist(0, pmf / pmf.sum(), truncation=K)


def expect(dist: DiscreteDist, g: Callable[[int], float]) -> float:
    """E[g(X)] = sum_k pmf(k) g(k)."""
    vals = np.array([float(g(int(k))) for k in dist.support])
    return float(np.dot(dist.pmf, vals))


def split_bernoulli(p: Sequence[float], i: int) -> np.ndarray:
    """Replace p_i by two independent Bernoullis of probability p_i / 2 each."""
    probs = as_probs(p)
    return np.concatenate((np.delete(probs, i), [probs[i] / 2.0, probs[i] / 2.0]))


def hoeffding_majorization_check(p: Sequence[float], g: ConvexIntFunction) -> MajorizationCheck:
    """Compare E[g(S)] for S a Bernoulli sum with E[g(Z)] for Z Poisson of the same mean."""
    if not isinstance(g, ConvexIntFunction):
        raise NotConvexError("g must be a ConvexIntFunction carrying a convexity certificate")
    probs = as_probs(p)
    s_law = poisson_binomial_pmf(probs)
    z_law = poisson_truncated(float(probs.sum()), 1e-12)
    g = g.ensure(max(s_law.max_support, z_law.max_support) + 2)
    lhs = expect(s_law, g)
    rhs = expect(z_law, g)
    return MajorizationCheck(lhs, rhs, lhs <= rhs + 1e-10)


def _run_sharded(kernel, trials: int, rng: RngStream, shards: int, workers: int | None) -> MonteCarloEstimate:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    streams = rng.shard(shards)
    base, extra = divmod(trials, shards)
    counts = [base + (1 if s < extra else 0) for s in range(shards)]

    def run(args):
        stream, count = args
        gen = stream.generator()
        hits = 0
        done = 0
        while done < count:
            c = min(_CHUNK, count - done)
            hits += kernel(gen, c)
            done += c
        return hits

    jobs = list(zip(streams, counts))
    if workers and workers > 1 and shards > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(run, jobs))
    else:
        hits = sum(map(run, jobs))
    est = hits / trials
    return MonteCarloEstimate(est, math.sqrt(est * (1.0 - est) / trials), trials)


def simulate_walk_nonneg(
    alphas: StepSchedule | Sequence[float],
    n: int,
    trials: int,
    rng: RngStream,
    shards: int = 1,
    workers: int | None = None,
) -> MonteCarloEstimate:
    """Monte Carlo estimate of P(sum_{i=k}^n (F_i - H_i) >= 0 for k = n..1).

    F_i and H_i are independent Bernoulli(alpha_i).
    """
    sched = StepSchedule.of(alphas)
    sched.require(n)
    a = sched.alphas[:n]

    def kernel(gen: np.random.Generator, c: int) -> int:
        if n == 0:
            return c
        f = gen.random((c, n)) < a
        h = gen.random((c, n)) < a
        z = f.astype(np.int32) - h.astype(np.int32)
        partial = np.cumsum(z[:, ::-1], axis=1)
        return int(np.count_nonzero(np.all(partial >= 0, axis=1)))

    return _run_sharded(kernel, trials, rng, shards, workers)


def simulate_fox_hare(
    alphas: StepSchedule | Sequence[float],
    m: int,
    n: int,
    trials: int,
    rng: RngStream,
    shards: int = 1,
    workers: int | None = None,
) -> MonteCarloEstimate:
    """Monte Carlo estimate of c_{mn} = P(sum_{i=k}^n F_i > sum_{i=k}^m H_i for k = m+1..1).

    F_i, H_i are independent Bernoulli(alpha_i). For m = -1 the event has no
    constraints and the estimate is exactly 1.
    """
    sched = StepSchedule.of(alphas)
    sched.require(n)
    if not -1 <= m <= n:
        raise ValueError(f"need -1 <= m <= n, got m={m}, n={n}")
    if m == -1:
        return MonteCarloEstimate(1.0, 0.0, trials)
    a = sched.alphas[:n]

    def kernel(gen: np.random.Generator, c: int) -> int:
        f = (gen.random((c, n)) < a).astype(np.int32)
        h = (gen.random((c, m)) < a[:m]).astype(np.int32)
        zeros = np.zeros((c, 1), dtype=np.int32)
        # tail sums over i = k..n (resp. k..m) for k = 1..m+1
        fox = np.concatenate((np.cumsum(f[:, ::-1], axis=1)[:, ::-1], zeros), axis=1)[:, : m + 1]
        hare = np.concatenate((np.cumsum(h[:, ::-1], axis=1)[:, ::-1], zeros), axis=1)
        return int(np.count_nonzero(np.all(fox > hare, axis=1)))

    return _run_sharded(kernel, trials, rng, shards, workers)
