"""Conditional-inference regression trees.

Recursive partitioning that only splits a node when a Bonferroni-adjusted
permutation test rejects independence between the response and some
covariate. Each node is described by non-negative integer case weights over
the learning sample; a split hands each positively weighted row to exactly
one child.

The association test is the standardized linear statistic
``T = sum_i w_i x_i y_i`` under the conditional permutation null, with a
normal (numeric covariate) or chi-square (categorical covariate) p-value.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import FrozenSet, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

logger = logging.getLogger("alpha-bandit.ctree")

# Relative tolerance under which a weighted variance counts as zero.
VARIANCE_EPS = 1e-12


class InfeasibleSplitError(ValueError):
    """Raised when no split leaves both children with enough weight."""


class CTreeConfig(BaseModel):
    """Stopping and search parameters for tree growth.

    ``significance`` is the nominal test level, unrelated to the LinUCB
    exploration value.
    """

    model_config = ConfigDict(frozen=True)

    significance: float = Field(0.05, gt=0.0, lt=1.0)
    min_leaf_weight: int = Field(20, ge=1)
    max_depth: int = Field(10, ge=0)
    categorical_exhaustive_limit: int = Field(10, ge=2)


@dataclass(frozen=True)
class LearningSample:
    """Rows of ``(covariates, response, weight)``.

    Covariates listed in ``categorical`` hold level codes; all others are
    numeric.
    """

    covariates: np.ndarray
    response: np.ndarray
    weights: np.ndarray
    categorical: FrozenSet[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.covariates.ndim != 2:
            raise ValueError("Covariates must be an n x m matrix")
        n, m = self.covariates.shape
        if n < 1:
            raise ValueError("Learning sample must not be empty")
        if self.response.shape != (n,) or self.weights.shape != (n,):
            raise ValueError("Response and weights must have one entry per row")
        if np.any(self.weights < 0):
            raise ValueError("Case weights must be non-negative")
        if not np.any(self.weights > 0):
            raise ValueError("At least one case weight must be positive")
        if any(not 0 <= j < m for j in self.categorical):
            raise ValueError("Categorical covariate index out of range")

    @classmethod
    def from_arrays(
        cls,
        covariates: Sequence[Sequence[float]],
        response: Sequence[float],
        weights: Optional[Sequence[int]] = None,
        categorical: Sequence[int] = (),
    ) -> "LearningSample":
        X = np.asarray(covariates, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(response, dtype=float)
        if X.shape[0] == 0:
            raise ValueError("Learning sample must not be empty")
        w = (
            np.ones(len(y), dtype=np.int64)
            if weights is None
            else np.asarray(weights, dtype=np.int64)
        )
        return cls(X, y, w, frozenset(int(j) for j in categorical))

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class NumericSplit:
    covariate: int
    threshold: float
    statistic: float

    def goes_left(self, values: np.ndarray) -> np.ndarray:
        return values <= self.threshold

    def describe(self) -> str:
        return f"x{self.covariate} <= {self.threshold:.6g}"


@dataclass(frozen=True)
class CategoricalSplit:
    covariate: int
    left_levels: FrozenSet[float]
    statistic: float

    def goes_left(self, values: np.ndarray) -> np.ndarray:
        return np.isin(values, sorted(self.left_levels))

    def describe(self) -> str:
        levels = ", ".join(f"{level:g}" for level in sorted(self.left_levels))
        return f"x{self.covariate} in {{{levels}}}"


Split = Union[NumericSplit, CategoricalSplit]


@dataclass(frozen=True)
class Leaf:
    prediction: float
    weight_total: float


@dataclass(frozen=True)
class Internal:
    split: Split
    left: "CTreeNode"
    right: "CTreeNode"
    weight_total: float
    p_value: float


CTreeNode = Union[Leaf, Internal]


def _weighted_moments(values: np.ndarray, w: np.ndarray) -> Tuple[float, float]:
    total = w.sum()
    mean = float(w @ values / total)
    variance = float(w @ (values - mean) ** 2 / total)
    return mean, variance


def _is_zero_variance(variance: float, mean: float) -> bool:
    return variance <= VARIANCE_EPS * max(1.0, mean * mean)


def _numeric_association(
    x: np.ndarray, y: np.ndarray, w: np.ndarray
) -> Tuple[float, float]:
    W = w.sum()
    if W < 2:
        return 0.0, 1.0
    ey, vy = _weighted_moments(y, w)
    ex, vx = _weighted_moments(x, w)
    if _is_zero_variance(vy, ey) or _is_zero_variance(vx, ex):
        return 0.0, 1.0
    T = float(w @ (x * y))
    mu = W * ex * ey
    variance = vy * W * W * vx / (W - 1)
    statistic = (T - mu) / np.sqrt(variance)
    return float(statistic), float(min(1.0, 2.0 * stats.norm.sf(abs(statistic))))


def _categorical_association(
    x: np.ndarray, y: np.ndarray, w: np.ndarray
) -> Tuple[float, float]:
    W = w.sum()
    levels = np.unique(x)
    if W < 2 or len(levels) < 2:
        return 0.0, 1.0
    ey, vy = _weighted_moments(y, w)
    if _is_zero_variance(vy, ey):
        return 0.0, 1.0
    indicators = (x[:, None] == levels[None, :]).astype(float)
    level_weight = indicators.T @ w
    T = indicators.T @ (w * y)
    deviation = T - level_weight * ey
    covariance = (
        vy * W / (W - 1) * (np.diag(level_weight) - np.outer(level_weight, level_weight) / W)
    )
    statistic = float(deviation @ np.linalg.pinv(covariance) @ deviation)
    df = int(np.linalg.matrix_rank(covariance))
    if df < 1:
        return 0.0, 1.0
    return statistic, float(stats.chi2.sf(statistic, df))


def _positive_rows(
    sample: LearningSample, weights: Optional[np.ndarray]
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    w = sample.weights if weights is None else np.asarray(weights)
    keep = w > 0
    return sample.covariates[keep], sample.response[keep], w[keep].astype(float)


def associate(
    sample: LearningSample, weights: Optional[np.ndarray], j: int
) -> Tuple[float, float]:
    """Return ``(statistic, p_value)`` for covariate ``j`` against the response.

    Degenerate nodes (zero weighted variance in the covariate or the
    response, or fewer than two units of weight) report ``p_value = 1``.
    """
    if not 0 <= j < sample.n_covariates:
        raise ValueError(f"Covariate index {j} out of range")
    X, y, w = _positive_rows(sample, weights)
    if j in sample.categorical:
        return _categorical_association(X[:, j], y, w)
    return _numeric_association(X[:, j], y, w)


def _adjusted_p_values(
    sample: LearningSample, weights: Optional[np.ndarray]
) -> np.ndarray:
    m = sample.n_covariates
    p_values = np.array([associate(sample, weights, j)[1] for j in range(m)])
    return np.minimum(1.0, m * p_values)


def select_covariate(
    sample: LearningSample,
    weights: Optional[np.ndarray],
    config: CTreeConfig,
) -> Optional[int]:
    """Return the most strongly associated covariate, or ``None`` to stop.

    P-values are Bonferroni-adjusted over the ``m`` covariates; the node
    stops when the smallest adjusted p-value exceeds ``config.significance``.
    """
    adjusted = _adjusted_p_values(sample, weights)
    best = int(np.argmin(adjusted))
    if adjusted[best] > config.significance:
        return None
    return best


def _two_sample_statistic(
    left_weight: np.ndarray, left_sum: np.ndarray, W: float, ey: float, vy: float
) -> np.ndarray:
    """Standardized ``sum_{left} w y`` for each candidate left set."""
    if _is_zero_variance(vy, ey):
        return np.zeros_like(left_weight, dtype=float)
    variance = vy * left_weight * (W - left_weight) / (W - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        statistic = np.abs(left_sum - left_weight * ey) / np.sqrt(variance)
    return np.where(variance > 0, statistic, 0.0)


def _numeric_split(
    j: int, x: np.ndarray, y: np.ndarray, w: np.ndarray, config: CTreeConfig
) -> NumericSplit:
    order = np.argsort(x, kind="mergesort")
    xs, ys, ws = x[order], y[order], w[order]
    values, starts = np.unique(xs, return_index=True)
    if len(values) < 2:
        raise InfeasibleSplitError(f"Covariate {j} has a single distinct value")

    W = ws.sum()
    ey, vy = _weighted_moments(ys, ws)
    cum_weight = np.cumsum(ws)
    cum_sum = np.cumsum(ws * ys)
    # Left set for candidate k holds every row with x <= values[k].
    last_of_value = np.append(starts[1:], len(xs)) - 1
    left_weight = cum_weight[last_of_value][:-1]
    left_sum = cum_sum[last_of_value][:-1]

    feasible = (left_weight >= config.min_leaf_weight) & (
        W - left_weight >= config.min_leaf_weight
    )
    if not np.any(feasible):
        raise InfeasibleSplitError(
            f"No split on covariate {j} leaves {config.min_leaf_weight} weight per side"
        )
    statistic = _two_sample_statistic(left_weight, left_sum, W, ey, vy)
    statistic = np.where(feasible, statistic, -np.inf)
    k = int(np.argmax(statistic))
    threshold = (values[k] + values[k + 1]) / 2.0
    return NumericSplit(covariate=j, threshold=float(threshold), statistic=float(statistic[k]))


def _level_bipartitions(n_levels: int) -> Iterator[Tuple[int, ...]]:
    """Yield left sets of level positions; the last level always goes right."""
    for size in range(1, n_levels):
        yield from itertools.combinations(range(n_levels - 1), size)


def _categorical_split(
    j: int, x: np.ndarray, y: np.ndarray, w: np.ndarray, config: CTreeConfig
) -> CategoricalSplit:
    levels = np.unique(x)
    if len(levels) < 2:
        raise InfeasibleSplitError(f"Covariate {j} has a single level")
    W = w.sum()
    ey, vy = _weighted_moments(y, w)
    indicators = x[:, None] == levels[None, :]
    level_weight = indicators.T.astype(float) @ w
    level_sum = indicators.T.astype(float) @ (w * y)

    if len(levels) <= config.categorical_exhaustive_limit:
        candidates: List[Tuple[int, ...]] = list(_level_bipartitions(len(levels)))
    else:
        means = level_sum / level_weight
        ordered = np.argsort(means, kind="mergesort")
        candidates = [tuple(ordered[:k]) for k in range(1, len(levels))]

    membership = np.zeros((len(candidates), len(levels)))
    for row, left in enumerate(candidates):
        membership[row, list(left)] = 1.0
    left_weight = membership @ level_weight
    left_sum = membership @ level_sum

    feasible = (left_weight >= config.min_leaf_weight) & (
        W - left_weight >= config.min_leaf_weight
    )
    if not np.any(feasible):
        raise InfeasibleSplitError(
            f"No split on covariate {j} leaves {config.min_leaf_weight} weight per side"
        )
    statistic = np.where(
        feasible, _two_sample_statistic(left_weight, left_sum, W, ey, vy), -np.inf
    )
    best = int(np.argmax(statistic))
    left_levels = frozenset(float(levels[i]) for i in candidates[best])
    return CategoricalSplit(covariate=j, left_levels=left_levels, statistic=float(statistic[best]))


def best_split(
    sample: LearningSample,
    weights: Optional[np.ndarray],
    j: int,
    config: Optional[CTreeConfig] = None,
) -> Split:
    """Return the split of covariate ``j`` maximizing the two-sample statistic.

    Numeric covariates split at midpoints between adjacent distinct values
    (values ``<=`` the threshold go left). Categorical covariates search all
    ``2^(L-1) - 1`` bipartitions when ``L`` is within the exhaustive limit,
    otherwise prefixes of the levels ordered by weighted mean response.
    """
    config = config or CTreeConfig()
    if not 0 <= j < sample.n_covariates:
        raise ValueError(f"Covariate index {j} out of range")
    X, y, w = _positive_rows(sample, weights)
    if j in sample.categorical:
        return _categorical_split(j, X[:, j], y, w, config)
    return _numeric_split(j, X[:, j], y, w, config)


@dataclass(frozen=True)
class CTree:
    """A fitted tree; immutable and safe to share read-only."""

    root: CTreeNode
    n_covariates: int

    def _route(self, covariates: np.ndarray) -> Leaf:
        node = self.root
        while isinstance(node, Internal):
            value = covariates[[node.split.covariate]]
            node = node.left if bool(node.split.goes_left(value)[0]) else node.right
        return node

    def predict(self, covariates: Sequence[float]) -> float:
        values = np.asarray(covariates, dtype=float)
        if values.shape != (self.n_covariates,):
            raise ValueError(
                f"Expected {self.n_covariates} covariates, got shape {values.shape}"
            )
        return self._route(values).prediction

    def predict_many(self, covariates: np.ndarray) -> np.ndarray:
        """Vectorized ``predict`` over the rows of an ``n x m`` matrix."""
        X = np.asarray(covariates, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_covariates:
            raise ValueError(
                f"Expected an n x {self.n_covariates} matrix, got shape {X.shape}"
            )
        out = np.empty(X.shape[0])
        stack: List[Tuple[CTreeNode, np.ndarray]] = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if isinstance(node, Leaf):
                out[rows] = node.prediction
                continue
            mask = node.split.goes_left(X[rows, node.split.covariate])
            stack.append((node.left, rows[mask]))
            stack.append((node.right, rows[~mask]))
        return out

    def leaves(self) -> List[Leaf]:
        found: List[Leaf] = []
        stack: List[CTreeNode] = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Leaf):
                found.append(node)
            else:
                stack.extend((node.right, node.left))
        return found

    @property
    def depth(self) -> int:
        def _depth(node: CTreeNode) -> int:
            if isinstance(node, Leaf):
                return 0
            return 1 + max(_depth(node.left), _depth(node.right))

        return _depth(self.root)

    def dump(self) -> str:
        """Indented text rendering, one node per line."""
        lines: List[str] = []

        def _walk(node: CTreeNode, depth: int) -> None:
            pad = "  " * depth
            if isinstance(node, Leaf):
                lines.append(
                    f"{pad}leaf weight={node.weight_total:g} prediction={node.prediction:.6g}"
                )
                return
            lines.append(
                f"{pad}split {node.split.describe()} weight={node.weight_total:g} "
                f"p={node.p_value:.3g}"
            )
            _walk(node.left, depth + 1)
            _walk(node.right, depth + 1)

        _walk(self.root, 0)
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        def _node(node: CTreeNode) -> dict:
            if isinstance(node, Leaf):
                return {"leaf": [node.prediction, node.weight_total]}
            split = node.split
            if isinstance(split, NumericSplit):
                encoded = {"j": split.covariate, "threshold": split.threshold}
            else:
                encoded = {"j": split.covariate, "levels": sorted(split.left_levels)}
            encoded["statistic"] = split.statistic
            return {
                "split": encoded,
                "weight": node.weight_total,
                "p": node.p_value,
                "left": _node(node.left),
                "right": _node(node.right),
            }

        return {"m": self.n_covariates, "root": _node(self.root)}

    @classmethod
    def from_dict(cls, data: dict) -> "CTree":
        def _node(raw: dict) -> CTreeNode:
            if "leaf" in raw:
                return Leaf(prediction=raw["leaf"][0], weight_total=raw["leaf"][1])
            encoded = raw["split"]
            split: Split
            if "threshold" in encoded:
                split = NumericSplit(encoded["j"], encoded["threshold"], encoded["statistic"])
            else:
                split = CategoricalSplit(
                    encoded["j"], frozenset(encoded["levels"]), encoded["statistic"]
                )
            return Internal(
                split=split,
                left=_node(raw["left"]),
                right=_node(raw["right"]),
                weight_total=raw["weight"],
                p_value=raw["p"],
            )

        return cls(root=_node(data["root"]), n_covariates=data["m"])


def _grow(
    sample: LearningSample, weights: np.ndarray, depth: int, config: CTreeConfig
) -> CTreeNode:
    # Rows outside the node are dropped; the remaining weights stay the case weights.
    keep = weights > 0
    node_sample = LearningSample(
        sample.covariates[keep],
        sample.response[keep],
        weights[keep],
        sample.categorical,
    )
    w = node_sample.weights.astype(float)
    total = float(w.sum())
    leaf = Leaf(prediction=float(w @ node_sample.response / total), weight_total=total)

    if depth >= config.max_depth or total < 2 * config.min_leaf_weight:
        return leaf
    if len(np.unique(node_sample.covariates, axis=0)) < 2:
        return leaf

    adjusted = _adjusted_p_values(node_sample, None)
    j = int(np.argmin(adjusted))
    if adjusted[j] > config.significance:
        return leaf
    try:
        split = best_split(node_sample, None, j, config)
    except InfeasibleSplitError as e:
        logger.debug("Stopping at infeasible split", extra={"depth": depth, "reason": str(e)})
        return leaf

    goes_left = split.goes_left(node_sample.covariates[:, j])
    left = _grow(node_sample, node_sample.weights * goes_left, depth + 1, config)
    right = _grow(node_sample, node_sample.weights * ~goes_left, depth + 1, config)
    return Internal(
        split=split,
        left=left,
        right=right,
        weight_total=total,
        p_value=float(adjusted[j]),
    )


def fit(sample: LearningSample, config: Optional[CTreeConfig] = None) -> CTree:
    """Grow a conditional-inference tree over ``sample``."""
    config = config or CTreeConfig()
    root = _grow(sample, np.asarray(sample.weights), 0, config)
    tree = CTree(root=root, n_covariates=sample.n_covariates)
    logger.debug(
        "Fitted conditional inference tree",
        extra={"leaves": len(tree.leaves()), "depth": tree.depth},
    )
    return tree
