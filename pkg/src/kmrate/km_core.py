"""Krasnosel'skii-Mann iteration over abstract normed spaces, with certificates.

The iteration x_k = (1 - alpha_k) x_{k-1} + alpha_k T x_{k-1} runs on any
``VectorSpace`` (dense R^d with an l2 or lp norm, or finitely supported
sequences in l1). Residual bounds:

* diameter certificate   ||x_n - T x_n|| <= diam C / sqrt(pi * S_n)
* fixed-point certificate ||x_n - T x_n|| <= k * dist(x_0, Fix T) / sqrt(S_n)
  with k = 2/sqrt(pi) in general and k = 1 in Hilbert spaces

where S_n = sum_{i<=n} alpha_i (1 - alpha_i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .bounds import KAPPA, constants
from .schedule import StepSchedule
from .stochastic import RngStream, poisson_binomial_pmf

__all__ = [
    "VectorSpace",
    "EuclideanSpace",
    "LpSpace",
    "SequenceL1Space",
    "OperatorHandle",
    "IterationTrace",
    "Certificate",
    "CertificateViolation",
    "SharpnessResult",
    "km_iterate",
    "certify_diameter",
    "certify_fixpoint",
    "hilbert_identity_check",
    "hilbert_identity_residual",
    "hilbert_descent_gap",
    "identity_operator",
    "negation_operator",
    "rotation_operator",
    "ball_projection",
    "shift_operator_l1",
    "shift_sharpness_experiment",
    "operator_from_spec",
    "schedule_from_spec",
    "run_experiment",
]

CERT_TOL = 1e-10
TWO_OVER_ROOT_PI = 2.0 / math.sqrt(math.pi)


class VectorSpace:
    """Linear operations and a norm over an opaque point type."""

    is_hilbert = False

    def add(self, x, y):
        raise NotImplementedError

    def scale(self, c: float, x):
        raise NotImplementedError

    def norm(self, x) -> float:
        raise NotImplementedError

    def inner_product(self, x, y) -> float:
        raise TypeError(f"{type(self).__name__} has no inner product")

    def random_point(self, gen: np.random.Generator):
        raise NotImplementedError

    def combine(self, x, y, alpha: float):
        """(1 - alpha) x + alpha y."""
        return self.add(self.scale(1.0 - alpha, x), self.scale(alpha, y))

    def distance(self, x, y) -> float:
        return self.norm(self.add(x, self.scale(-1.0, y)))

    def check_axioms(self, rng: RngStream, samples: int = 200) -> float:
        """Spot-check norm axioms on random triples; returns the worst violation seen.

        Raises ``ValueError`` if the triangle inequality or homogeneity fails
        beyond 1e-10 relative, or (Hilbert spaces) if norm^2 != <x, x>.
        """
        gen = rng.generator()
        worst = 0.0
        for _ in range(samples):
            x, y = self.random_point(gen), self.random_point(gen)
            c = gen.normal() * 3.0
            nx, ny = self.norm(x), self.norm(y)
            tri = self.norm(self.add(x, y)) - (nx + ny)
            hom = abs(self.norm(self.scale(c, x)) - abs(c) * nx)
            scale = max(1.0, nx + ny, abs(c) * nx)
            bad = max(tri, hom) / scale
            if self.is_hilbert:
                bad = max(bad, abs(nx * nx - self.inner_product(x, x)) / max(1.0, nx * nx))
            worst = max(worst, bad)
        if worst > 1e-10:
            raise ValueError(f"norm axioms violated (worst relative defect {worst:.3e})")
        return worst


class EuclideanSpace(VectorSpace):
    """R^d with the l2 norm (a Hilbert space)."""

    is_hilbert = True

    def __init__(self, dim: int):
        self.dim = dim

    def add(self, x, y):
        return np.asarray(x, dtype=float) + np.asarray(y, dtype=float)

    def scale(self, c, x):
        return c * np.asarray(x, dtype=float)

    def norm(self, x):
        return float(np.linalg.norm(x))

    def inner_product(self, x, y):
        return float(np.dot(x, y))

    def random_point(self, gen):
        return gen.normal(size=self.dim)


class LpSpace(EuclideanSpace):
    """R^d with an lp norm, p in [1, inf]; not Hilbert unless p == 2."""

    def __init__(self, dim: int, p: float):
        super().__init__(dim)
        self.p = p
        self.is_hilbert = p == 2

    def norm(self, x):
        return float(np.linalg.norm(np.asarray(x, dtype=float), ord=self.p))

    def inner_product(self, x, y):
        if not self.is_hilbert:
            return VectorSpace.inner_product(self, x, y)
        return super().inner_product(x, y)


class SequenceL1Space(VectorSpace):
    """Finitely supported real sequences with the l1 norm.

    A point is a 1-d array holding coordinates 0..len-1; all later
    coordinates are zero, so arithmetic is exact up to float rounding.
    """

    @staticmethod
    def _pad(x, size):
        x = np.asarray(x, dtype=float)
        return x if x.size == size else np.concatenate((x, np.zeros(size - x.size)))

    def add(self, x, y):
        size = max(len(x), len(y))
        return self._pad(x, size) + self._pad(y, size)

    def scale(self, c, x):
        return c * np.asarray(x, dtype=float)

    def norm(self, x):
        return float(np.sum(np.abs(x)))

    def random_point(self, gen):
        return gen.normal(size=gen.integers(1, 12))


@dataclass(frozen=True, eq=False)
class OperatorHandle:
    """A self-map of a convex set, declared non-expansive.

    ``contains`` (optional) rejects points outside the domain; ``sampler``
    (optional) draws domain points for the non-expansiveness spot check.
    """

    apply: Callable[[Any], Any]
    space: VectorSpace
    declared_diameter: float | None = None
    declared_fixed_point: Any = None
    name: str = "T"
    contains: Callable[[Any], bool] | None = None
    sampler: Callable[[np.random.Generator], Any] | None = None

    def __call__(self, x):
        if self.contains is not None and not self.contains(x):
            raise ValueError(f"point outside the domain of {self.name}")
        return self.apply(x)

    def check_nonexpansive(self, rng: RngStream, pairs: int = 200) -> float:
        """Largest ||Tx - Ty|| / ||x - y|| over sampled pairs; raises if above 1 + 1e-10."""
        if self.sampler is None:
            raise ValueError(f"{self.name} has no domain sampler")
        gen = rng.generator()
        worst = 0.0
        for _ in range(pairs):
            x, y = self.sampler(gen), self.sampler(gen)
            d = self.space.distance(x, y)
            if d == 0.0:
                continue
            worst = max(worst, self.space.distance(self(x), self(y)) / d)
        if worst > 1.0 + 1e-10:
            raise ValueError(f"{self.name} expanded a sampled pair by factor {worst!r}")
        return worst


@dataclass(eq=False)
class IterationTrace:
    points: list
    residuals: np.ndarray
    schedule: StepSchedule
    space: VectorSpace
    operator_name: str = "T"

    @property
    def n(self) -> int:
        return len(self.points) - 1

    def residuals_nonincreasing(self, tol: float = 1e-12) -> bool:
        r = self.residuals
        return bool(np.all(r[1:] <= r[:-1] * (1.0 + tol) + tol))

    def distances_to(self, y) -> np.ndarray:
        return np.array([self.space.distance(x, y) for x in self.points])

    def reconstruction_error(self, op: OperatorHandle) -> float:
        """max_k ||x_k - [(1 - a_k) x_{k-1} + a_k T x_{k-1}]||."""
        worst = 0.0
        for k in range(1, self.n + 1):
            prev = self.points[k - 1]
            expect = self.space.combine(prev, op(prev), self.schedule.alpha(k))
            worst = max(worst, self.space.distance(self.points[k], expect))
        return worst


def km_iterate(op: OperatorHandle, x0, sched: StepSchedule | Sequence[float], n: int) -> IterationTrace:
    """Run n KM steps from x0, recording every iterate and residual ||x_k - T x_k||."""
    sched = StepSchedule.of(sched)
    sched.require(n)
    space = op.space
    x = x0
    tx = op(x)
    points = [x]
    residuals = [space.distance(x, tx)]
    for k in range(1, n + 1):
        x = space.combine(x, tx, sched.alpha(k))
        tx = op(x)
        points.append(x)
        residuals.append(space.distance(x, tx))
    return IterationTrace(points, np.array(residuals), sched, space, op.name)


class CertificateViolation(AssertionError):
    """An observed residual exceeded its certified bound."""


@dataclass(frozen=True)
class Certificate:
    kind: str
    value: float
    observed: float
    n: int
    sum_s: float
    constant: float | None
    scale: float
    trivial: bool = False

    @property
    def holds(self) -> bool:
        return self.observed <= self.value + CERT_TOL

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "observed": self.observed,
            "holds": self.holds,
            "n": self.n,
            "sum_s": self.sum_s,
            "constant": self.constant,
            "scale": self.scale,
            "trivial": self.trivial,
        }


def _finish(cert: Certificate, strict: bool) -> Certificate:
    if strict and not cert.holds:
        raise CertificateViolation(
            f"{cert.kind}: residual {cert.observed!r} exceeds certified bound {cert.value!r}"
        )
    return cert


def certify_diameter(trace: IterationTrace, diam: float, strict: bool = True) -> Certificate:
    """Bound r_n by diam / sqrt(pi * S_n).

    When S_n = 0 the bound is undefined and the trivial bound ``diam`` is
    returned instead (flagged ``trivial``).
    """
    if not diam > 0:
        raise ValueError("diameter must be positive")
    n = trace.n
    sum_s = trace.schedule.sum_s(n)
    observed = float(trace.residuals[n])
    if sum_s == 0.0:
        cert = Certificate("diameter_bound", diam, observed, n, 0.0, None, diam, trivial=True)
    else:
        cert = Certificate("diameter_bound", diam / math.sqrt(math.pi * sum_s), observed, n, sum_s, KAPPA, diam)
    return _finish(cert, strict)


_VARIANTS = {
    "two_over_rootpi": ("fixpoint_bound_2rootpi", TWO_OVER_ROOT_PI, False),
    "hilbert_one": ("fixpoint_bound_hilbert", 1.0, True),
    "hilbert_shifted": ("shifted_hilbert", 1.0, True),
}


def certify_fixpoint(trace: IterationTrace, dist0: float, variant: str = "two_over_rootpi", strict: bool = True) -> Certificate:
    """Bound the residual by k * dist0 / sqrt(S_n).

    ``dist0`` must dominate dist(x_0, Fix T). ``hilbert_shifted`` certifies
    r_{n-1} instead of r_n with the same right-hand side. When S_n = 0 the
    trivial bound 2 * dist0 is used (by Fejer monotonicity r_k <= 2 ||x_k - y||).
    """
    if variant not in _VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    kind, const, needs_hilbert = _VARIANTS[variant]
    if needs_hilbert and not trace.space.is_hilbert:
        raise ValueError(f"variant {variant!r} requires a Hilbert space")
    if dist0 < 0:
        raise ValueError("dist0 must be non-negative")
    n = trace.n
    sum_s = trace.schedule.sum_s(n)
    if variant == "hilbert_shifted":
        if n < 1:
            raise ValueError("the shifted certificate needs n >= 1")
        observed = float(trace.residuals[n - 1])
    else:
        observed = float(trace.residuals[n])
    if sum_s == 0.0:
        cert = Certificate(kind, 2.0 * dist0, observed, n, 0.0, None, dist0, trivial=True)
    else:
        cert = Certificate(kind, const * dist0 / math.sqrt(sum_s), observed, n, sum_s, const, dist0)
    return _finish(cert, strict)


def hilbert_identity_residual(space: VectorSpace, u, v, a: float) -> float:
    """|lhs - rhs| of ||(1-a)u + a v||^2 = (1-a)||u||^2 + a||v||^2 - a(1-a)||u-v||^2."""
    if not space.is_hilbert:
        raise ValueError("identity only holds in Hilbert spaces")
    lhs = space.norm(space.combine(u, v, a)) ** 2
    rhs = (1 - a) * space.norm(u) ** 2 + a * space.norm(v) ** 2 - a * (1 - a) * space.distance(u, v) ** 2
    return abs(lhs - rhs)


def hilbert_identity_check(space: VectorSpace, samples: int, rng: RngStream) -> float:
    """Max identity residual over random (u, v, a) triples."""
    if not space.is_hilbert:
        raise ValueError("identity only holds in Hilbert spaces")
    gen = rng.generator()
    worst = 0.0
    for _ in range(samples):
        u, v = space.random_point(gen), space.random_point(gen)
        worst = max(worst, hilbert_identity_residual(space, u, v, gen.uniform()))
    return worst


def hilbert_descent_gap(trace: IterationTrace, y) -> tuple[float, float]:
    """(sum_{i<=n} a_i(1-a_i) r_{i-1}^2, ||x_0 - y||^2 - ||x_n - y||^2) for a fixed point y."""
    a = trace.schedule.alphas[: trace.n]
    lhs = float(np.sum(a * (1.0 - a) * trace.residuals[:-1] ** 2))
    rhs = trace.space.distance(trace.points[0], y) ** 2 - trace.space.distance(trace.points[-1], y) ** 2
    return lhs, rhs


# built-in operators


def identity_operator(dim: int = 2) -> OperatorHandle:
    space = EuclideanSpace(dim)
    return OperatorHandle(
        apply=lambda x: np.array(x, dtype=float),
        space=space,
        name="identity",
        sampler=lambda g: g.normal(size=dim),
    )


def negation_operator() -> OperatorHandle:
    """T x = -x on C = [-1, 1]."""
    return OperatorHandle(
        apply=lambda x: -np.asarray(x, dtype=float),
        space=EuclideanSpace(1),
        declared_diameter=2.0,
        declared_fixed_point=np.zeros(1),
        name="negation",
        contains=lambda x: abs(float(np.asarray(x).reshape(-1)[0])) <= 1.0 + 1e-12,
        sampler=lambda g: g.uniform(-1.0, 1.0, size=1),
    )


def rotation_operator(theta: float = math.pi / 2, radius: float = 1.0) -> OperatorHandle:
    """Planar rotation by ``theta`` on the disc of the given radius (an isometry)."""
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])

    def sample(g):
        r = radius * math.sqrt(g.uniform())
        t = g.uniform(0.0, 2.0 * math.pi)
        return np.array([r * math.cos(t), r * math.sin(t)])

    return OperatorHandle(
        apply=lambda x: R @ np.asarray(x, dtype=float),
        space=EuclideanSpace(2),
        declared_diameter=2.0 * radius,
        declared_fixed_point=np.zeros(2),
        name="rotation",
        contains=lambda x: float(np.linalg.norm(x)) <= radius * (1.0 + 1e-12),
        sampler=sample,
    )


def ball_projection(center: Sequence[float], radius: float, domain_radius: float) -> OperatorHandle:
    """Metric projection onto the ball B(center, radius), acting on B(0, domain_radius)."""
    center = np.asarray(center, dtype=float)
    dim = center.size
    if np.linalg.norm(center) + radius > domain_radius:
        raise ValueError("the target ball must lie inside the domain ball")

    def project(x):
        x = np.asarray(x, dtype=float)
        d = x - center
        nd = float(np.linalg.norm(d))
        return x.copy() if nd <= radius else center + d * (radius / nd)

    def sample(g):
        v = g.normal(size=dim)
        return v / np.linalg.norm(v) * domain_radius * g.uniform() ** (1.0 / dim)

    return OperatorHandle(
        apply=project,
        space=EuclideanSpace(dim),
        declared_diameter=2.0 * domain_radius,
        declared_fixed_point=center,
        name="ball_projection",
        contains=lambda x: float(np.linalg.norm(x)) <= domain_radius * (1.0 + 1e-12),
        sampler=sample,
    )


def _in_l1_simplex_ball(x) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.all(x >= -1e-15) and x.sum() <= 1.0 + 1e-12)


def shift_operator_l1() -> OperatorHandle:
    """Right shift (x0, x1, ...) -> (0, x0, x1, ...) on {x >= 0, sum x <= 1} in l1."""

    def sample(g):
        w = g.exponential(size=g.integers(1, 10))
        return w / w.sum() * g.uniform()

    return OperatorHandle(
        apply=lambda x: np.concatenate(([0.0], np.asarray(x, dtype=float))),
        space=SequenceL1Space(),
        declared_diameter=2.0,
        declared_fixed_point=np.zeros(1),
        name="shift_l1",
        contains=_in_l1_simplex_ball,
        sampler=sample,
    )


class SharpnessResult(NamedTuple):
    m: int
    u: float
    observed: float
    eta: float
    gap: float
    central_mass: float


def shift_sharpness_experiment(m: int, u: float | None = None) -> SharpnessResult:
    """Lower-bound example for the optimal constant in the diameter certificate.

    With m steps of u/m followed by m steps of 1 - u/m, the shift iterate
    x_{2m} is the Poisson-binomial law of the steps; its central mass
    P(X = Y) times sqrt(S_{2m}) approaches eta as m grows. By default
    u = x*/2 where x* maximizes sqrt(x) exp(-x) I0(x).
    """
    c = constants()
    if u is None:
        u = c.eta_argmax / 2.0
    if m < 1 or not 0.0 < u < m:
        raise ValueError(f"need m >= 1 and 0 < u < m, got m={m}, u={u}")
    sched = StepSchedule.two_block(m, u)
    central = poisson_binomial_pmf(sched.alphas).prob(m)
    observed = central * math.sqrt(sched.sum_s(2 * m))
    return SharpnessResult(m, float(u), observed, c.eta, c.eta - observed, central)


# declarative construction


def operator_from_spec(spec: Mapping[str, Any]) -> OperatorHandle:
    """Build an operator from {"kind": ..., **params}.

    Kinds: identity(dim), negation, rotation(theta, radius),
    ball_projection(center, radius, domain_radius), shift_l1.
    """
    kind = spec.get("kind")
    if kind == "identity":
        return identity_operator(int(spec.get("dim", 2)))
    if kind == "negation":
        return negation_operator()
    if kind == "rotation":
        return rotation_operator(float(spec.get("theta", math.pi / 2)), float(spec.get("radius", 1.0)))
    if kind == "ball_projection":
        return ball_projection(spec["center"], float(spec["radius"]), float(spec["domain_radius"]))
    if kind == "shift_l1":
        return shift_operator_l1()
    raise ValueError(f"unknown operator kind {kind!r}")


def schedule_from_spec(spec: Mapping[str, Any]) -> StepSchedule:
    """Build a schedule from {"kind": ..., **params}.

    Kinds: const(alpha, length), two-block(m, u), uniform-random(length, seed),
    file(path), explicit(alphas).
    """
    kind = spec.get("kind")
    if kind == "const":
        return StepSchedule.constant(float(spec["alpha"]), int(spec["length"]))
    if kind == "two-block":
        return StepSchedule.two_block(int(spec["m"]), float(spec["u"]))
    if kind == "uniform-random":
        gen = RngStream(int(spec.get("seed", 0)), int(spec.get("stream_id", 0))).generator()
        return StepSchedule.uniform_random(int(spec["length"]), gen)
    if kind == "file":
        return StepSchedule.from_file(spec["path"])
    if kind == "explicit":
        return StepSchedule(np.asarray(spec["alphas"], dtype=float))
    raise ValueError(f"unknown schedule kind {kind!r}")


def run_experiment(spec: Mapping[str, Any]) -> dict:
    """Run KM from a JSON-style description and certify the final residual.

    Keys: "operator", "schedule" (specs as above), "x0" (list), "n", and
    optionally "dist0" (defaults to the distance to the declared fixed point).
    """
    op = operator_from_spec(spec["operator"])
    sched = schedule_from_spec(spec["schedule"])
    n = int(spec.get("n", len(sched)))
    x0 = np.asarray(spec["x0"], dtype=float)
    trace = km_iterate(op, x0, sched, n)
    certs = []
    if op.declared_diameter is not None:
        certs.append(certify_diameter(trace, op.declared_diameter, strict=False))
    dist0 = spec.get("dist0")
    if dist0 is None and op.declared_fixed_point is not None:
        dist0 = op.space.distance(x0, op.declared_fixed_point)
    if dist0 is not None:
        variants = ["two_over_rootpi"]
        if op.space.is_hilbert:
            variants += ["hilbert_one"] + (["hilbert_shifted"] if n >= 1 else [])
        certs += [certify_fixpoint(trace, float(dist0), v, strict=False) for v in variants]
    return {
        "operator": op.name,
        "n": n,
        "residuals": trace.residuals.tolist(),
        "residuals_nonincreasing": trace.residuals_nonincreasing(),
        "certificates": [c.as_dict() for c in certs],
    }
