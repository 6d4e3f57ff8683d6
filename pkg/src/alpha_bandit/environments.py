"""Reward-generating environments: dataset replay, label switching, synthetic."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from alpha_bandit.bandit_core import Context

logger = logging.getLogger("alpha-bandit.environments")

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


class EndOfStream(Exception):
    """Raised when stepping an exhausted environment."""


@dataclass(frozen=True)
class StepResult:
    reward: float
    optimal_reward: float
    next_context: Optional[Context]


class Environment(ABC):
    """Bandit protocol: observe ``context``, ``step(arm)``, repeat."""

    n_arms: int
    dim: int

    def __init__(self):
        self.t = 0

    @property
    @abstractmethod
    def context(self) -> Optional[Context]:
        """Current context, or ``None`` once the stream is exhausted."""

    @property
    def exhausted(self) -> bool:
        return self.context is None

    @abstractmethod
    def best_arm(self) -> int:
        """Counterfactually best arm for the current context (evaluation only)."""

    @abstractmethod
    def _rewards(self, arm: int) -> "tuple[float, float]":
        """Return ``(reward, optimal_reward)`` for the current round."""

    @abstractmethod
    def _advance(self) -> None:
        """Move to the next round."""

    def step(self, arm: int) -> StepResult:
        if self.exhausted:
            raise EndOfStream(f"Environment exhausted after {self.t} rounds")
        if isinstance(arm, bool) or not 0 <= int(arm) < self.n_arms:
            raise ValueError(f"Unknown arm id {arm}; expected 0..{self.n_arms - 1}")
        reward, optimal = self._rewards(int(arm))
        self._advance()
        self.t += 1
        return StepResult(reward, optimal, self.context)


class ReplayEnv(Environment):
    """Classification log replayed as a two-armed bandit.

    Arm ``k`` pays 1 iff ``k`` equals the row's label. Rows are emitted once,
    in dataset order unless ``shuffle_seed`` is given.
    """

    n_arms = 2

    def __init__(
        self,
        contexts: np.ndarray,
        labels: np.ndarray,
        shuffle_seed: SeedLike = None,
        horizon: Optional[int] = None,
    ):
        super().__init__()
        contexts = np.asarray(contexts, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        if contexts.ndim != 2 or contexts.shape[0] != labels.shape[0]:
            raise ValueError("Replay needs an n x d context matrix and n labels")
        if np.any((labels != 0) & (labels != 1)):
            raise ValueError("Replay labels must be 0 or 1")
        order = np.arange(len(labels))
        if shuffle_seed is not None:
            order = np.random.default_rng(shuffle_seed).permutation(len(labels))
        if horizon is not None:
            order = order[:horizon]
        self.contexts = contexts[order]
        self.labels = labels[order]
        self.dim = contexts.shape[1]
        self.cursor = 0

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def context(self) -> Optional[Context]:
        if self.cursor >= len(self.labels):
            return None
        return self.contexts[self.cursor]

    @property
    def label(self) -> int:
        return int(self.labels[self.cursor])

    def paying_arm(self) -> int:
        return self.label

    def best_arm(self) -> int:
        return self.paying_arm()

    def _rewards(self, arm: int):
        return float(arm == self.paying_arm()), 1.0

    def _advance(self) -> None:
        self.cursor += 1


class SwitchingReplayEnv(Environment):
    """Replay whose label mapping inverts on every odd block of ``switch_period`` rounds."""

    def __init__(self, base: ReplayEnv, switch_period: int):
        super().__init__()
        if switch_period < 1:
            raise ValueError(f"Switch period must be at least 1, got {switch_period}")
        self.base = base
        self.switch_period = switch_period
        self.n_arms = base.n_arms
        self.dim = base.dim
        self.t = base.t

    @property
    def context(self) -> Optional[Context]:
        return self.base.context

    def inverted(self) -> bool:
        return (self.t // self.switch_period) % 2 == 1

    def paying_arm(self) -> int:
        label = self.base.label
        return 1 - label if self.inverted() else label

    def best_arm(self) -> int:
        return self.paying_arm()

    def _rewards(self, arm: int):
        return float(arm == self.paying_arm()), 1.0

    def _advance(self) -> None:
        self.base._advance()
        self.base.t += 1


def make_switching(base: ReplayEnv, s: int) -> SwitchingReplayEnv:
    return SwitchingReplayEnv(base, s)


class SyntheticLinearEnv(Environment):
    """Linear-Bernoulli arms over contexts drawn uniformly from the unit ball.

    Each round draws a single uniform ``u`` and arm ``k`` pays 1 iff
    ``u < clamp(mu_k . x, 0, 1)``; the arm with the largest clamped mean
    therefore realizes the best reward of the round.
    """

    def __init__(
        self,
        weights: np.ndarray,
        rng: np.random.Generator,
        horizon: Optional[int] = None,
    ):
        super().__init__()
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 2 or weights.shape[0] < 2 or weights.shape[1] < 1:
            raise ValueError("Synthetic weights must be a K x d matrix with K >= 2")
        self.weights = weights
        self.n_arms, self.dim = weights.shape
        self.rng = rng
        self.horizon = horizon
        self._context: Optional[Context] = self._sample_context()

    def _sample_context(self) -> Context:
        direction = self.rng.standard_normal(self.dim)
        norm = np.linalg.norm(direction)
        if norm == 0:
            return np.zeros(self.dim)
        radius = self.rng.random() ** (1.0 / self.dim)
        return direction / norm * radius

    @property
    def context(self) -> Optional[Context]:
        return self._context

    def expected_rewards(self, x: Context) -> np.ndarray:
        return np.clip(self.weights @ x, 0.0, 1.0)

    def optimal_arm(self, x: Context) -> int:
        return int(np.argmax(self.expected_rewards(x)))

    def best_arm(self) -> int:
        return self.optimal_arm(self._context)

    def _rewards(self, arm: int):
        realized = (self.rng.random() < self.expected_rewards(self._context)).astype(float)
        return float(realized[arm]), float(realized.max())

    def _advance(self) -> None:
        if self.horizon is not None and self.t + 1 >= self.horizon:
            self._context = None
        else:
            self._context = self._sample_context()


def make_synthetic(
    d: int,
    K: int,
    seed: SeedLike,
    weights: Optional[np.ndarray] = None,
    horizon: Optional[int] = None,
) -> SyntheticLinearEnv:
    """Draw unit-norm arm weights (unless given) and a seeded context stream."""
    if d < 1:
        raise ValueError(f"Context dimension must be positive, got {d}")
    if K < 2:
        raise ValueError(f"At least two arms are required, got {K}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if weights is None:
        weights = rng.standard_normal((K, d))
        weights /= np.linalg.norm(weights, axis=1, keepdims=True)
    elif np.shape(weights) != (K, d):
        raise ValueError(f"Weights must have shape ({K}, {d}), got {np.shape(weights)}")
    logger.debug("Created synthetic environment", extra={"d": d, "K": K})
    return SyntheticLinearEnv(weights, rng, horizon=horizon)
