"""Dense symmetric positive-definite matrices with a maintained inverse."""

import logging
from typing import Optional

import numpy as np
from scipy import linalg

DEFAULT_RECOMPUTE_PERIOD = 1000

logger = logging.getLogger("alpha-bandit.linalg")


class SpdMatrix:
    """Ridge design matrix ``A`` with an incrementally maintained ``A^-1``.

    The inverse follows every rank-one update through the Sherman-Morrison
    identity and is rebuilt from the entries by a Cholesky solve every
    ``recompute_period`` updates.
    """

    def __init__(
        self,
        entries: np.ndarray,
        inverse: Optional[np.ndarray] = None,
        recompute_period: int = DEFAULT_RECOMPUTE_PERIOD,
        updates_since_recompute: int = 0,
    ):
        entries = np.array(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"SPD matrix must be square, got shape {entries.shape}")
        if recompute_period < 1:
            raise ValueError("recompute_period must be at least 1")
        self.entries = entries
        self.recompute_period = recompute_period
        self.updates_since_recompute = updates_since_recompute
        if inverse is None:
            self.inverse_cache = self._direct_inverse()
        else:
            self.inverse_cache = np.array(inverse, dtype=float)

    @classmethod
    def identity(
        cls, d: int, recompute_period: int = DEFAULT_RECOMPUTE_PERIOD
    ) -> "SpdMatrix":
        """Return ``I_d`` with an identity inverse."""
        if isinstance(d, bool) or not isinstance(d, (int, np.integer)) or d <= 0:
            raise ValueError(f"Dimension must be a positive integer, got {d!r}")
        return cls(
            np.eye(d),
            inverse=np.eye(d),
            recompute_period=recompute_period,
        )

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def copy(self) -> "SpdMatrix":
        return SpdMatrix(
            self.entries.copy(),
            inverse=self.inverse_cache.copy(),
            recompute_period=self.recompute_period,
            updates_since_recompute=self.updates_since_recompute,
        )

    def _check_vector(self, x: np.ndarray, name: str) -> np.ndarray:
        vector = np.asarray(x, dtype=float)
        if vector.shape != (self.dim,):
            raise ValueError(
                f"{name} has shape {vector.shape}, expected ({self.dim},)"
            )
        return vector

    def _direct_inverse(self) -> np.ndarray:
        factor = linalg.cho_factor(self.entries, lower=True)
        inverse = linalg.cho_solve(factor, np.eye(self.dim))
        return (inverse + inverse.T) / 2.0

    def rank_one_update(self, x: np.ndarray) -> "SpdMatrix":
        """Add ``x x^T`` in place and return ``self``."""
        x = self._check_vector(x, "Update vector")
        if not np.all(np.isfinite(x)):
            raise ValueError("Update vector must be finite")
        if not np.any(x):
            return self

        self.entries += np.outer(x, x)
        self.entries = (self.entries + self.entries.T) / 2.0

        self.updates_since_recompute += 1
        if self.updates_since_recompute >= self.recompute_period:
            self.recompute()
            return self

        ax = self.inverse_cache @ x
        denominator = 1.0 + float(x @ ax)
        self.inverse_cache -= np.outer(ax, ax) / denominator
        self.inverse_cache = (self.inverse_cache + self.inverse_cache.T) / 2.0
        return self

    def recompute(self) -> None:
        """Rebuild the cached inverse from the entries."""
        self.inverse_cache = self._direct_inverse()
        self.updates_since_recompute = 0
        logger.debug("Recomputed cached inverse", extra={"dim": self.dim})

    def quad_form_inverse(self, x: np.ndarray) -> float:
        """Return ``x^T A^-1 x`` (never negative)."""
        x = self._check_vector(x, "Quadratic form vector")
        return max(0.0, float(x @ self.inverse_cache @ x))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Return ``y`` with ``A y = b``."""
        b = self._check_vector(b, "Right-hand side")
        return self.inverse_cache @ b

    def is_positive_definite(self) -> bool:
        try:
            linalg.cholesky(self.entries, lower=True)
        except linalg.LinAlgError:
            return False
        return True


def init_identity(d: int, recompute_period: int = DEFAULT_RECOMPUTE_PERIOD) -> SpdMatrix:
    return SpdMatrix.identity(d, recompute_period=recompute_period)
