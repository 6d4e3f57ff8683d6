"""Disjoint-model LinUCB: per-arm ridge state, UCB scores, and updates."""

from typing import Dict, Iterable, Optional

import numpy as np

from alpha_bandit.bandit_core import TieBreak, argmax_tiebreak
from alpha_bandit.spd_matrix import DEFAULT_RECOMPUTE_PERIOD, SpdMatrix


class ArmModel:
    """Ridge state ``(A, b)`` for one arm; ``theta = A^-1 b`` is cached."""

    def __init__(self, A: SpdMatrix, b: np.ndarray):
        self.A = A
        self.b = np.asarray(b, dtype=float)
        self._theta: Optional[np.ndarray] = None

    @classmethod
    def fresh(cls, d: int, recompute_period: int = DEFAULT_RECOMPUTE_PERIOD):
        return cls(SpdMatrix.identity(d, recompute_period), np.zeros(d))

    @property
    def theta(self) -> np.ndarray:
        if self._theta is None:
            self._theta = self.A.solve(self.b)
        return self._theta

    def width(self, x: np.ndarray) -> float:
        """Confidence width ``sqrt(x^T A^-1 x)``."""
        return float(np.sqrt(self.A.quad_form_inverse(x)))

    def update(self, x: np.ndarray, reward: float) -> None:
        self.A.rank_one_update(x)
        self.b = self.b + reward * x
        self._theta = None


class LinUcbState:
    """Arm models for ``n_arms`` arms sharing one context per round.

    Arms are created lazily at ``(I_d, 0)`` the first time they are scored or
    updated.
    """

    def __init__(
        self,
        d: int,
        n_arms: int,
        tie_break: TieBreak = "lowest-index",
        rng: Optional[np.random.Generator] = None,
        recompute_period: int = DEFAULT_RECOMPUTE_PERIOD,
    ):
        if d < 1:
            raise ValueError(f"Context dimension must be positive, got {d}")
        if n_arms < 2:
            raise ValueError(f"At least two arms are required, got {n_arms}")
        self.d = d
        self.n_arms = n_arms
        self.tie_break = tie_break
        self.rng = rng
        self.recompute_period = recompute_period
        self.arms: Dict[int, ArmModel] = {}
        self.updates = 0

    def _check_arm(self, arm: int) -> int:
        if isinstance(arm, bool) or not 0 <= int(arm) < self.n_arms:
            raise ValueError(f"Unknown arm id {arm}; expected 0..{self.n_arms - 1}")
        return int(arm)

    def _check_context(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"Context has shape {x.shape}, expected ({self.d},)")
        return x

    def arm_model(self, arm: int) -> ArmModel:
        arm = self._check_arm(arm)
        model = self.arms.get(arm)
        if model is None:
            model = ArmModel.fresh(self.d, self.recompute_period)
            self.arms[arm] = model
        return model

    def score(self, arm: int, x: np.ndarray, alpha: float) -> float:
        """Return ``theta^T x + alpha * sqrt(x^T A^-1 x)``."""
        if not alpha >= 0:
            raise ValueError(f"Exploration value must be non-negative, got {alpha}")
        x = self._check_context(x)
        model = self.arm_model(arm)
        return float(model.theta @ x) + alpha * model.width(x)

    def select_arm(
        self, x: np.ndarray, alpha: float, arms: Optional[Iterable[int]] = None
    ) -> int:
        """Return the arm with the largest UCB score."""
        candidates = list(range(self.n_arms)) if arms is None else sorted(arms)
        if not candidates:
            raise ValueError("Arm set must not be empty")
        scores = [self.score(arm, x, alpha) for arm in candidates]
        return candidates[argmax_tiebreak(scores, self.tie_break, rng=self.rng)]

    def update(self, arm: int, x: np.ndarray, reward: float) -> None:
        """Fold ``(x, reward)`` into the chosen arm's ridge state."""
        arm = self._check_arm(arm)
        x = self._check_context(x)
        if not np.isfinite(reward):
            raise ValueError(f"Reward must be finite, got {reward}")
        self.arm_model(arm).update(x, float(reward))
        self.updates += 1

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "n_arms": self.n_arms,
            "tie_break": self.tie_break,
            "recompute_period": self.recompute_period,
            "updates": self.updates,
            "arms": {
                str(arm): {
                    "A": model.A.entries.tolist(),
                    "A_inv": model.A.inverse_cache.tolist(),
                    "since_recompute": model.A.updates_since_recompute,
                    "b": model.b.tolist(),
                }
                for arm, model in sorted(self.arms.items())
            },
        }

    @classmethod
    def from_dict(
        cls, data: dict, rng: Optional[np.random.Generator] = None
    ) -> "LinUcbState":
        state = cls(
            data["d"],
            data["n_arms"],
            tie_break=data["tie_break"],
            rng=rng,
            recompute_period=data["recompute_period"],
        )
        state.updates = data["updates"]
        for arm, model in data["arms"].items():
            A = SpdMatrix(
                np.array(model["A"]),
                inverse=np.array(model["A_inv"]),
                recompute_period=state.recompute_period,
                updates_since_recompute=model["since_recompute"],
            )
            state.arms[int(arm)] = ArmModel(A, np.array(model["b"]))
        return state
