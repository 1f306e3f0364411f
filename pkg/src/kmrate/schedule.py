"""Relaxation-parameter schedules alpha_1, alpha_2, ... for the KM iteration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class StepSchedule:
    """Step sizes alpha_1..alpha_N, 1-indexed, with the convention alpha_0 = rho_0 = 1.

    Derived quantities: ``p_k = 2 alpha_k (1 - alpha_k)`` and the products
    ``rho_k = prod_{j<=k} (1 - alpha_j)``.
    """

    alphas: np.ndarray = field()

    def __post_init__(self):
        a = np.array(self.alphas, dtype=float).reshape(-1)
        if a.size and (np.any(~np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0):
            raise ValueError("step sizes must lie in [0, 1]")
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)

    def __len__(self) -> int:
        return self.alphas.size

    def __eq__(self, other) -> bool:
        return isinstance(other, StepSchedule) and np.array_equal(self.alphas, other.alphas)

    def __hash__(self):
        return hash(self.alphas.tobytes())

    def alpha(self, k: int) -> float:
        if k == 0:
            return 1.0
        return float(self.alphas[k - 1])

    def with_zero(self, n: int | None = None) -> np.ndarray:
        """Array (alpha_0, alpha_1, ..., alpha_n) with alpha_0 = 1."""
        n = len(self) if n is None else n
        self.require(n)
        return np.concatenate(([1.0], self.alphas[:n]))

    def require(self, n: int) -> None:
        if n < 0 or n > len(self):
            raise ValueError(f"schedule has {len(self)} steps, {n} requested")

    @property
    def p(self) -> np.ndarray:
        return 2.0 * self.alphas * (1.0 - self.alphas)

    def rho(self, k: int) -> float:
        self.require(k)
        return float(np.prod(1.0 - self.alphas[:k]))

    def sum_s(self, n: int) -> float:
        """sum_{i<=n} alpha_i (1 - alpha_i)."""
        self.require(n)
        a = self.alphas[:n]
        return float(np.sum(a * (1.0 - a)))

    def head(self, n: int) -> "StepSchedule":
        self.require(n)
        return StepSchedule(self.alphas[:n])

    # constructors

    @classmethod
    def constant(cls, alpha: float, length: int) -> "StepSchedule":
        return cls(np.full(length, float(alpha)))

    @classmethod
    def two_block(cls, m: int, u: float) -> "StepSchedule":
        """m steps of u/m followed by m steps of 1 - u/m."""
        if m < 1 or not 0.0 < u <= m:
            raise ValueError(f"two-block schedule needs m >= 1 and 0 < u <= m, got m={m}, u={u}")
        small = u / m
        return cls(np.concatenate((np.full(m, small), np.full(m, 1.0 - small))))

    @classmethod
    def uniform_random(cls, length: int, rng: np.random.Generator) -> "StepSchedule":
        return cls(rng.uniform(0.0, 1.0, size=length))

    @classmethod
    def from_file(cls, path: str | Path) -> "StepSchedule":
        """Read a JSON list (or {"alphas": [...]}) or whitespace/comma separated text."""
        text = Path(path).read_text()
        stripped = text.strip()
        if stripped.startswith(("[", "{")):
            data = json.loads(stripped)
            if isinstance(data, dict):
                data = data["alphas"]
            return cls(np.asarray(data, dtype=float))
        tokens = stripped.replace(",", " ").split()
        return cls(np.asarray([float(t) for t in tokens], dtype=float))

    @classmethod
    def of(cls, alphas: Sequence[float] | "StepSchedule") -> "StepSchedule":
        return alphas if isinstance(alphas, StepSchedule) else cls(np.asarray(alphas, dtype=float))
