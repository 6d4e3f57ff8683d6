"""Shared bandit types, tie-breaking, and regret accounting."""

import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

TieBreak = Literal["lowest-index", "seeded-random"]
TIE_BREAK_MODES = ("lowest-index", "seeded-random")

# A context is a finite float vector of fixed length d.
Context = np.ndarray


class UnsupportedEnvironmentError(ValueError):
    """Raised when regret is requested from a log without counterfactuals."""


def as_context(values: Sequence[float], dim: Optional[int] = None) -> Context:
    """Return ``values`` as a finite float context vector of length ``dim``."""
    context = np.asarray(values, dtype=float)
    if context.ndim != 1:
        raise ValueError(f"Context must be one-dimensional, got shape {context.shape}")
    if dim is not None and context.shape[0] != dim:
        raise ValueError(f"Context length {context.shape[0]} does not match d={dim}")
    if not np.all(np.isfinite(context)):
        raise ValueError("Context entries must be finite")
    return context


@dataclass(frozen=True)
class RoundRecord:
    """One interaction: what was seen, what was chosen, and what it paid."""

    t: int
    context: Context
    alpha: float
    arm: int
    reward: float
    optimal_reward: Optional[float]

    @property
    def regret(self) -> float:
        if self.optimal_reward is None:
            raise UnsupportedEnvironmentError(
                f"Round {self.t} has no counterfactual optimal reward"
            )
        return self.optimal_reward - self.reward


@dataclass(frozen=True)
class RegretCurve:
    """Cumulative regret indexed by round."""

    cumulative: np.ndarray

    @property
    def final(self) -> float:
        return float(self.cumulative[-1]) if len(self.cumulative) else 0.0

    def __len__(self) -> int:
        return len(self.cumulative)


def argmax_tiebreak(
    scores: Sequence[float],
    mode: TieBreak = "lowest-index",
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """Return an index attaining the maximum of ``scores``.

    ``lowest-index`` returns the first maximal index. ``seeded-random`` picks
    uniformly among the maximal indices using ``rng`` when given, otherwise a
    generator seeded with ``seed``.
    """
    values = np.asarray(scores, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("Scores must be a non-empty vector")
    if np.any(np.isnan(values)):
        raise ValueError("Scores must not contain NaN")
    if mode not in TIE_BREAK_MODES:
        raise ValueError(f"Unknown tie-break mode: {mode}; expected one of {TIE_BREAK_MODES}")
    if mode == "lowest-index":
        return int(np.argmax(values))

    winners = np.flatnonzero(values == values.max())
    if winners.size == 1:
        return int(winners[0])
    if rng is None:
        rng = np.random.default_rng(seed)
    return int(winners[rng.integers(winners.size)])


def compute_regret(log: Sequence[RoundRecord]) -> RegretCurve:
    """Accumulate ``optimal_reward - reward`` over an ordered round log."""
    per_round = np.empty(len(log), dtype=float)
    previous_t = -math.inf
    for i, record in enumerate(log):
        if record.t <= previous_t:
            raise ValueError(
                f"Round log must be strictly increasing in t (got {record.t} after {previous_t})"
            )
        previous_t = record.t
        per_round[i] = record.regret
    return RegretCurve(cumulative=np.cumsum(per_round))
