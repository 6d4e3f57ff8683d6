"""Beta-Bernoulli Thompson sampling over a grid of exploration values."""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from alpha_bandit.bandit_core import argmax_tiebreak

DEFAULT_GRID_SPEC = "0.01:1.00:0.01"


class InvalidPosteriorStateError(RuntimeError):
    """Raised when a Beta posterior has a non-positive parameter."""


@dataclass(frozen=True)
class AlphaGrid:
    """Strictly increasing positive candidate exploration values."""

    values: Tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("Alpha grid must not be empty")
        if any(not np.isfinite(v) or v <= 0 for v in self.values):
            raise ValueError("Alpha grid values must be finite and positive")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("Alpha grid must be strictly increasing")

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "AlphaGrid":
        return cls(tuple(float(v) for v in values))

    @classmethod
    def parse(cls, spec: str) -> "AlphaGrid":
        """Expand ``start:stop:step`` (inclusive of ``stop``) into a grid.

        Values are rounded to the step's decimal precision so ``0.01:1:0.01``
        yields exactly 100 candidates 0.01, 0.02, ..., 1.0.
        """
        parts = spec.split(":")
        if len(parts) == 1:
            return cls.from_values([float(parts[0])])
        if len(parts) != 3:
            raise ValueError(f"Grid spec must be 'start:stop:step', got {spec!r}")
        try:
            start, stop, step = (float(part) for part in parts)
        except ValueError as e:
            raise ValueError(f"Grid spec has a non-numeric part: {spec!r}") from e
        if step <= 0:
            raise ValueError(f"Grid step must be positive, got {step}")
        if stop < start:
            raise ValueError(f"Grid stop {stop} is below start {start}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        decimals = max(_decimals(parts[0]), _decimals(parts[2]))
        values = np.round(start + step * np.arange(count), decimals)
        return cls.from_values(values.tolist())

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index: int) -> float:
        return self.values[index]


def _decimals(text: str) -> int:
    text = text.strip()
    return len(text.split(".", 1)[1]) if "." in text else 0


class AlphaPosterior:
    """Per-candidate pull counts and cumulative rewards with Beta priors.

    Candidate ``i`` has posterior ``Beta(S0_i + rf_i, F0_i + n_i - rf_i)``.
    """

    def __init__(self, size: int, prior_successes: float = 1.0, prior_failures: float = 1.0):
        if size < 1:
            raise ValueError("Posterior needs at least one candidate")
        if prior_successes <= 0 or prior_failures <= 0:
            raise ValueError("Beta priors must be positive")
        self.S0 = np.full(size, float(prior_successes))
        self.F0 = np.full(size, float(prior_failures))
        self.n = np.zeros(size, dtype=np.int64)
        self.rf = np.zeros(size, dtype=float)

    def __len__(self) -> int:
        return len(self.n)

    def successes(self) -> np.ndarray:
        return self.S0 + self.rf

    def failures(self) -> np.ndarray:
        return self.F0 + self.n - self.rf

    def mean(self) -> np.ndarray:
        return self.successes() / (self.S0 + self.F0 + self.n)

    def sample_select(
        self, grid: AlphaGrid, rng: np.random.Generator
    ) -> Tuple[int, float]:
        """Draw one ``theta_i`` per candidate and return the argmax candidate."""
        if len(grid) != len(self):
            raise ValueError(
                f"Grid has {len(grid)} values but the posterior tracks {len(self)}"
            )
        a, b = self.successes(), self.failures()
        if np.any(a <= 0) or np.any(b <= 0):
            raise InvalidPosteriorStateError("Beta posterior parameters must be positive")
        theta = rng.beta(a, b)
        index = argmax_tiebreak(theta)
        return index, grid[index]

    def update_posterior(self, index: int, reward: float) -> None:
        """Credit a {0,1} reward to candidate ``index``."""
        if reward not in (0, 1):
            raise ValueError(f"Posterior reward must be 0 or 1, got {reward}")
        if not 0 <= index < len(self):
            raise ValueError(f"Candidate index {index} out of range")
        self.n[index] += 1
        self.rf[index] += reward

    def to_dict(self) -> dict:
        return {
            "S0": self.S0.tolist(),
            "F0": self.F0.tolist(),
            "n": self.n.tolist(),
            "rf": self.rf.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AlphaPosterior":
        posterior = cls(len(data["n"]))
        posterior.S0 = np.array(data["S0"], dtype=float)
        posterior.F0 = np.array(data["F0"], dtype=float)
        posterior.n = np.array(data["n"], dtype=np.int64)
        posterior.rf = np.array(data["rf"], dtype=float)
        return posterior
