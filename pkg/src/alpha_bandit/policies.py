"""Runnable policies sharing one choose/learn contract.

``FixedAlphaPolicy`` runs LinUCB with a constant exploration value,
``OplinucbPolicy`` picks the value each round by Thompson sampling over a
grid, and ``DoplinucbPolicy`` picks it by maximizing a conditional-inference
tree's predicted reward for ``context + [alpha]``.
"""

import json
import logging
from abc import ABC, abstractmethod
from collections import deque
from typing import Deque, Optional, Tuple

import numpy as np

from alpha_bandit.alpha_posterior import AlphaGrid, AlphaPosterior
from alpha_bandit.bandit_core import Context, RoundRecord, TieBreak, argmax_tiebreak
from alpha_bandit.ctree import CTree, CTreeConfig, LearningSample, fit
from alpha_bandit.environments import EndOfStream, Environment
from alpha_bandit.linucb import LinUcbState

SNAPSHOT_FORMAT_VERSION = 1

logger = logging.getLogger("alpha-bandit.policies")


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _rng_from_state(state: dict) -> np.random.Generator:
    bit_generator = getattr(np.random, state["bit_generator"])()
    bit_generator.state = state
    return np.random.Generator(bit_generator)


class Policy(ABC):
    """Observe a context, choose ``(arm, alpha)``, then learn from the reward."""

    kind: str

    def __init__(
        self,
        d: int,
        n_arms: int,
        rng: Optional[np.random.Generator] = None,
        tie_break: TieBreak = "lowest-index",
        tie_rng: Optional[np.random.Generator] = None,
    ):
        self.rng = rng if rng is not None else np.random.default_rng()
        # arm ties never consume the alpha-selection stream
        self.tie_rng = tie_rng if tie_rng is not None else self.rng.spawn(1)[0]
        self.inner = LinUcbState(d, n_arms, tie_break=tie_break, rng=self.tie_rng)
        self.rounds_played = 0

    @property
    def label(self) -> str:
        return self.kind

    @abstractmethod
    def choose(self, context: Context) -> Tuple[int, float]:
        """Return ``(arm, alpha_used)`` for ``context``."""

    def learn(self, context: Context, arm: int, reward: float) -> None:
        self.inner.update(arm, context, reward)
        self.rounds_played += 1

    def _state(self) -> dict:
        return {}

    def snapshot(self) -> bytes:
        """Serialize the full policy state, RNG included, as versioned JSON."""
        payload = {
            "format_version": SNAPSHOT_FORMAT_VERSION,
            "kind": self.kind,
            "rounds_played": self.rounds_played,
            "rng": _rng_state(self.rng),
            "tie_rng": _rng_state(self.tie_rng),
            "inner": self.inner.to_dict(),
            **self._state(),
        }
        return json.dumps(payload, sort_keys=True).encode()


def fixed_label(alpha: float) -> str:
    """Label of a fixed-alpha run; distinct alphas get distinct labels."""
    return f"fixed_a{float(alpha)!r}"


class FixedAlphaPolicy(Policy):
    """LinUCB with a constant exploration value."""

    kind = "fixed"

    def __init__(self, alpha: float, d: int, n_arms: int, **kwargs):
        if not alpha >= 0:
            raise ValueError(f"Exploration value must be non-negative, got {alpha}")
        super().__init__(d, n_arms, **kwargs)
        self.alpha = float(alpha)

    @property
    def label(self) -> str:
        return fixed_label(self.alpha)

    def choose(self, context: Context) -> Tuple[int, float]:
        return self.inner.select_arm(context, self.alpha), self.alpha

    def _state(self) -> dict:
        return {"alpha": self.alpha}


class OplinucbPolicy(Policy):
    """Thompson sampling over ``grid`` chooses each round's exploration value.

    The realized reward of a round is credited to the chosen value only.
    Rewards outside {0,1} go through a Bernoulli trial first when
    ``bernoulli_rewards`` is set and are rejected otherwise.
    """

    kind = "oplinucb"

    def __init__(
        self,
        grid: AlphaGrid,
        d: int,
        n_arms: int,
        prior_successes: float = 1.0,
        prior_failures: float = 1.0,
        bernoulli_rewards: bool = False,
        **kwargs,
    ):
        super().__init__(d, n_arms, **kwargs)
        self.grid = grid
        self.posterior = AlphaPosterior(len(grid), prior_successes, prior_failures)
        self.bernoulli_rewards = bernoulli_rewards
        self.pending_alpha_index: Optional[int] = None

    def choose(self, context: Context) -> Tuple[int, float]:
        index, alpha = self.posterior.sample_select(self.grid, self.rng)
        self.pending_alpha_index = index
        return self.inner.select_arm(context, alpha), alpha

    def learn(self, context: Context, arm: int, reward: float) -> None:
        if self.pending_alpha_index is None:
            raise RuntimeError("learn() called without a pending choose()")
        if reward not in (0, 1):
            if not self.bernoulli_rewards:
                raise ValueError(f"OPLINUCB expects rewards in {{0,1}}, got {reward}")
            meta_reward = float(self.rng.random() < reward)
        else:
            meta_reward = float(reward)
        super().learn(context, arm, reward)
        self.posterior.update_posterior(self.pending_alpha_index, meta_reward)
        self.pending_alpha_index = None

    def _state(self) -> dict:
        return {
            "grid": list(self.grid.values),
            "posterior": self.posterior.to_dict(),
            "bernoulli_rewards": self.bernoulli_rewards,
            "pending": self.pending_alpha_index,
        }


class DoplinucbPolicy(Policy):
    """Tree-predicted reward over ``context + [alpha]`` chooses the exploration value.

    Until the first tree exists the value is drawn uniformly from the grid.
    The tree is refit on the sliding training window once ``warmup_rounds``
    rounds have been played and every ``refit_period`` rounds after that.
    """

    kind = "doplinucb"

    def __init__(
        self,
        grid: AlphaGrid,
        d: int,
        n_arms: int,
        warmup_rounds: int = 5000,
        window_size: int = 5000,
        refit_period: int = 500,
        ctree_config: Optional[CTreeConfig] = None,
        **kwargs,
    ):
        if warmup_rounds < 0:
            raise ValueError("warmup_rounds must be non-negative")
        if window_size < 1 or refit_period < 1:
            raise ValueError("window_size and refit_period must be positive")
        super().__init__(d, n_arms, **kwargs)
        self.grid = grid
        self.grid_column = np.asarray(grid.values, dtype=float)
        self.warmup_rounds = warmup_rounds
        self.window_size = window_size
        self.refit_period = refit_period
        self.ctree_config = ctree_config or CTreeConfig()
        self.tree: Optional[CTree] = None
        self.training_log: Deque[Tuple[np.ndarray, float]] = deque(maxlen=window_size)
        self.pending_alpha_index: Optional[int] = None
        self.refits = 0

    def alpha_scores(self, context: Context) -> np.ndarray:
        """Predicted reward of every grid value at ``context``."""
        if self.tree is None:
            raise RuntimeError("No tree has been fitted yet")
        covariates = np.column_stack(
            [np.tile(np.asarray(context, dtype=float), (len(self.grid), 1)), self.grid_column]
        )
        return self.tree.predict_many(covariates)

    def choose(self, context: Context) -> Tuple[int, float]:
        if self.tree is None:
            index = int(self.rng.integers(len(self.grid)))
        else:
            index = argmax_tiebreak(self.alpha_scores(context))
        self.pending_alpha_index = index
        alpha = self.grid[index]
        return self.inner.select_arm(context, alpha), alpha

    def learn(self, context: Context, arm: int, reward: float) -> None:
        if self.pending_alpha_index is None:
            raise RuntimeError("learn() called without a pending choose()")
        alpha = self.grid[self.pending_alpha_index]
        super().learn(context, arm, reward)
        self.training_log.append((np.append(np.asarray(context, dtype=float), alpha), float(reward)))
        self.pending_alpha_index = None

        since_warmup = self.rounds_played - self.warmup_rounds
        if since_warmup >= 0 and since_warmup % self.refit_period == 0:
            self.ctree_refit()

    def ctree_refit(self) -> None:
        """Replace the tree with one fitted on the current training window."""
        rows = len(self.training_log)
        if rows < self.ctree_config.min_leaf_weight:
            logger.info(
                "Skipping tree refit: not enough training rows",
                extra={"rows": rows, "required": self.ctree_config.min_leaf_weight},
            )
            return
        covariates = np.array([row for row, _ in self.training_log])
        response = np.array([reward for _, reward in self.training_log])
        sample = LearningSample.from_arrays(covariates, response)
        self.tree = fit(sample, self.ctree_config)
        self.refits += 1
        logger.debug(
            "Refitted exploration tree",
            extra={"rows": rows, "round": self.rounds_played, "refits": self.refits},
        )

    def _state(self) -> dict:
        return {
            "grid": list(self.grid.values),
            "warmup_rounds": self.warmup_rounds,
            "window_size": self.window_size,
            "refit_period": self.refit_period,
            "ctree": self.ctree_config.model_dump(),
            "tree": None if self.tree is None else self.tree.to_dict(),
            "training_log": [[row.tolist(), reward] for row, reward in self.training_log],
            "pending": self.pending_alpha_index,
            "refits": self.refits,
        }


class OraclePolicy(Policy):
    """Plays the environment's counterfactually best arm; a zero-regret reference."""

    kind = "oracle"

    def __init__(self, env: Environment, **kwargs):
        super().__init__(env.dim, env.n_arms, **kwargs)
        self.env = env

    def choose(self, context: Context) -> Tuple[int, float]:
        return self.env.best_arm(), 0.0

    def snapshot(self) -> bytes:
        raise ValueError("Cannot snapshot policy kind 'oracle': it plays from a live environment")


def restore_policy(blob: bytes) -> Policy:
    """Rebuild a policy from ``Policy.snapshot()`` output."""
    data = json.loads(blob.decode())
    version = data.get("format_version")
    if version != SNAPSHOT_FORMAT_VERSION:
        raise ValueError(f"Unsupported snapshot format version: {version}")

    rng = _rng_from_state(data["rng"])
    tie_rng = _rng_from_state(data["tie_rng"])
    inner = LinUcbState.from_dict(data["inner"], rng=tie_rng)
    common = {"rng": rng, "tie_break": inner.tie_break, "tie_rng": tie_rng}
    kind = data["kind"]
    policy: Policy
    if kind == FixedAlphaPolicy.kind:
        policy = FixedAlphaPolicy(data["alpha"], inner.d, inner.n_arms, **common)
    elif kind == OplinucbPolicy.kind:
        policy = OplinucbPolicy(
            AlphaGrid.from_values(data["grid"]),
            inner.d,
            inner.n_arms,
            bernoulli_rewards=data["bernoulli_rewards"],
            **common,
        )
        policy.posterior = AlphaPosterior.from_dict(data["posterior"])
        policy.pending_alpha_index = data["pending"]
    elif kind == DoplinucbPolicy.kind:
        policy = DoplinucbPolicy(
            AlphaGrid.from_values(data["grid"]),
            inner.d,
            inner.n_arms,
            warmup_rounds=data["warmup_rounds"],
            window_size=data["window_size"],
            refit_period=data["refit_period"],
            ctree_config=CTreeConfig(**data["ctree"]),
            **common,
        )
        policy.tree = None if data["tree"] is None else CTree.from_dict(data["tree"])
        policy.training_log.extend(
            (np.array(row, dtype=float), reward) for row, reward in data["training_log"]
        )
        policy.pending_alpha_index = data["pending"]
        policy.refits = data["refits"]
    else:
        raise ValueError(f"Cannot restore policy kind {kind!r}")
    policy.inner = inner
    policy.rounds_played = data["rounds_played"]
    return policy


def step(policy: Policy, env: Environment) -> RoundRecord:
    """Play one round of ``policy`` against ``env`` and return its record."""
    context = env.context
    if context is None:
        raise EndOfStream(f"Environment exhausted after {env.t} rounds")
    t = env.t
    arm, alpha = policy.choose(context)
    result = env.step(arm)
    policy.learn(context, arm, result.reward)
    return RoundRecord(
        t=t,
        context=context,
        alpha=alpha,
        arm=arm,
        reward=result.reward,
        optimal_reward=result.optimal_reward,
    )


def fixed_step(policy: FixedAlphaPolicy, env: Environment) -> RoundRecord:
    return step(policy, env)


def oplinucb_step(policy: OplinucbPolicy, env: Environment) -> RoundRecord:
    return step(policy, env)


def doplinucb_step(policy: DoplinucbPolicy, env: Environment) -> RoundRecord:
    return step(policy, env)
