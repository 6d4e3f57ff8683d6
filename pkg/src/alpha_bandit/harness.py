"""Experiment driver: single runs, alpha-grid sweeps, summaries, and plot data.

Every run owns two RNG streams derived from the master seed and the run's
seed value, one for the environment and one for the policy, so results do not
depend on how runs are scheduled.
"""

import asyncio
import functools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from alpha_bandit.bandit_core import RoundRecord, compute_regret
from alpha_bandit.config import EnvironmentSection, ExperimentConfig, PolicySection, SweepSection
from alpha_bandit.environments import (
    EndOfStream,
    Environment,
    ReplayEnv,
    make_switching,
    make_synthetic,
)
from alpha_bandit.ingest import EncodedDataset, load_dataset, read_cache, write_cache
from alpha_bandit.policies import (
    DoplinucbPolicy,
    FixedAlphaPolicy,
    OplinucbPolicy,
    OraclePolicy,
    Policy,
    fixed_label,
    step,
)
from alpha_bandit.run_pool import RunPool

logger = logging.getLogger("alpha-bandit.harness")

LOG_COLUMNS = ("t", "alpha", "arm", "reward", "optimal_reward", "cumulative_regret")
SUMMARY_ROWS = ("max", "min", "mean", "median", "OPLINUCB", "DOPLINUCB")
LOG_SUFFIX = ".csv"
SEED_SEPARATOR = "__seed"

ENVIRONMENT_STREAM = 0
POLICY_STREAM = 1
TIE_STREAM = 2
POLICY_CODES = {"fixed": 0, "oplinucb": 1, "doplinucb": 2, "oracle": 3}


class AlignmentError(ValueError):
    """Raised when a set of round logs cannot be aggregated."""


@dataclass(frozen=True)
class PolicySpec:
    """Which policy a run plays; ``warmup_rounds`` overrides the config value."""

    kind: str
    alpha: Optional[float] = None
    alpha_index: int = 0
    warmup_rounds: Optional[int] = None

    @classmethod
    def from_config(cls, section: PolicySection) -> "PolicySpec":
        return cls(kind=section.kind, alpha=section.alpha)

    @property
    def label(self) -> str:
        if self.kind == "fixed":
            return fixed_label(self.alpha)
        if self.kind == "doplinucb" and self.warmup_rounds is not None:
            return f"doplinucb_w{self.warmup_rounds}"
        return self.kind


@dataclass(frozen=True)
class RunTask:
    config: ExperimentConfig
    spec: PolicySpec
    seed: int
    switch_period: Optional[int] = None
    log_dir: Optional[Path] = None
    column: Optional[int] = None

    @property
    def key(self) -> Tuple[Optional[int], str, int]:
        return (self.column, self.spec.label, self.seed)


@dataclass(frozen=True)
class RunResult:
    label: str
    seed: int
    rounds: int
    final_regret: float
    log_path: Optional[Path] = None
    duration: float = field(default=0.0, compare=False)


def environment_seed(config: ExperimentConfig, seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([config.master_seed, seed, ENVIRONMENT_STREAM])


def policy_seed(config: ExperimentConfig, spec: PolicySpec, seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        [config.master_seed, seed, POLICY_STREAM, POLICY_CODES[spec.kind], spec.alpha_index]
    )


def tie_seed(config: ExperimentConfig, seed: int) -> np.random.SeedSequence:
    """Arm tie-break stream; shared by every policy kind and alpha of a seed."""
    return np.random.SeedSequence([config.master_seed, seed, TIE_STREAM])


@functools.lru_cache(maxsize=4)
def _encoded(
    paths: Tuple[Path, ...], encoder_rows: Optional[int], cache: Optional[Path]
) -> EncodedDataset:
    if cache is not None and cache.exists():
        return read_cache(cache)
    dataset, _ = load_dataset(list(paths), encoder_rows)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        write_cache(dataset, cache)
        logger.info("Wrote encoded dataset cache", extra={"path": str(cache)})
    return dataset


def load_environment_data(section: EnvironmentSection) -> EncodedDataset:
    if section.paths is None:
        raise ValueError(f"{section.kind} environment has no dataset paths")
    return _encoded(tuple(section.paths), section.encoder_rows, section.cache)


def build_environment(
    config: ExperimentConfig, seed: int, switch_period: Optional[int] = None
) -> Environment:
    section = config.environment
    if section.kind == "synthetic":
        rng = np.random.default_rng(environment_seed(config, seed))
        return make_synthetic(section.d, section.K, rng, horizon=config.horizon)

    data = load_environment_data(section)
    shuffle = environment_seed(config, seed) if section.ordering == "shuffled" else None
    base = ReplayEnv(data.contexts, data.labels, shuffle_seed=shuffle, horizon=config.horizon)
    if section.kind == "switching":
        return make_switching(base, switch_period or section.switch_period)
    return base


def build_policy(
    config: ExperimentConfig, spec: PolicySpec, env: Environment, seed: int
) -> Policy:
    section = config.policy
    common = {
        "rng": np.random.default_rng(policy_seed(config, spec, seed)),
        "tie_break": config.tie_break,
        "tie_rng": np.random.default_rng(tie_seed(config, seed)),
    }
    if spec.kind == "fixed":
        return FixedAlphaPolicy(spec.alpha, env.dim, env.n_arms, **common)
    if spec.kind == "oplinucb":
        return OplinucbPolicy(
            section.alpha_grid(),
            env.dim,
            env.n_arms,
            prior_successes=section.prior_successes,
            prior_failures=section.prior_failures,
            bernoulli_rewards=section.bernoulli_rewards,
            **common,
        )
    if spec.kind == "doplinucb":
        warmup = section.warmup_rounds if spec.warmup_rounds is None else spec.warmup_rounds
        return DoplinucbPolicy(
            section.alpha_grid(),
            env.dim,
            env.n_arms,
            warmup_rounds=warmup,
            window_size=section.window_size,
            refit_period=section.refit_period,
            ctree_config=config.ctree.to_ctree_config(),
            **common,
        )
    if spec.kind == "oracle":
        return OraclePolicy(env, **common)
    raise ValueError(f"Unknown policy kind: {spec.kind!r}")


def simulate(policy: Policy, env: Environment, horizon: int) -> List[RoundRecord]:
    """Play until ``horizon`` rounds or the environment runs out."""
    log: List[RoundRecord] = []
    while len(log) < horizon:
        try:
            log.append(step(policy, env))
        except EndOfStream:
            break
    return log


def rounds_frame(log: Sequence[RoundRecord]) -> pd.DataFrame:
    curve = compute_regret(log)
    return pd.DataFrame(
        {
            "t": [record.t for record in log],
            "alpha": [record.alpha for record in log],
            "arm": [record.arm for record in log],
            "reward": [record.reward for record in log],
            "optimal_reward": [record.optimal_reward for record in log],
            "cumulative_regret": curve.cumulative,
        },
        columns=list(LOG_COLUMNS),
    )


def log_filename(label: str, seed: int) -> str:
    return f"{label}{SEED_SEPARATOR}{seed}{LOG_SUFFIX}"


def run_experiment(
    config: ExperimentConfig,
    seed: int,
    out_dir: Optional[Path] = None,
    spec: Optional[PolicySpec] = None,
    switch_period: Optional[int] = None,
) -> RunResult:
    """Run one seeded experiment and optionally write its per-round log."""
    spec = spec or PolicySpec.from_config(config.policy)
    start_time = time.perf_counter()
    env = build_environment(config, seed, switch_period)
    policy = build_policy(config, spec, env, seed)
    log = simulate(policy, env, config.horizon)
    if not log:
        raise AlignmentError("Environment produced no rounds")

    frame = rounds_frame(log)
    log_path = None
    if out_dir is not None:
        log_path = Path(out_dir) / log_filename(spec.label, seed)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(log_path, index=False)

    result = RunResult(
        label=spec.label,
        seed=seed,
        rounds=len(frame),
        final_regret=float(frame["cumulative_regret"].iloc[-1]),
        log_path=log_path,
        duration=time.perf_counter() - start_time,
    )
    logger.info(
        "run_summary",
        extra={
            "run": {
                "policy": result.label,
                "seed": seed,
                "rounds": result.rounds,
                "final_regret": result.final_regret,
                "duration_seconds": round(result.duration, 3),
                "log_path": None if log_path is None else str(log_path),
                "switch_period": switch_period,
            }
        },
    )
    return result


def execute_task(task: RunTask) -> RunResult:
    return run_experiment(
        task.config, task.seed, task.log_dir, task.spec, task.switch_period
    )


def _task_key(task: RunTask) -> Hashable:
    return task.key


def prepare_data(config: ExperimentConfig) -> None:
    """Load (and cache) the dataset once before runs fan out to workers."""
    if config.environment.kind != "synthetic":
        load_environment_data(config.environment)


async def run_seeds_async(
    config: ExperimentConfig,
    seeds: Sequence[int],
    out_dir: Optional[Path] = None,
    jobs: Optional[int] = None,
) -> List[RunResult]:
    prepare_data(config)
    spec = PolicySpec.from_config(config.policy)
    tasks = [RunTask(config, spec, seed, log_dir=out_dir) for seed in seeds]
    results = await RunPool(jobs).run(tasks, execute_task, _task_key)
    return [results[task.key] for task in tasks]


def run_seeds(
    config: ExperimentConfig,
    seeds: Sequence[int],
    out_dir: Optional[Path] = None,
    jobs: Optional[int] = None,
) -> List[RunResult]:
    return asyncio.run(run_seeds_async(config, seeds, out_dir, jobs))


def summarize(values: Sequence[float]) -> Dict[str, float]:
    """Max, min, mean and median of per-alpha final regrets."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("Cannot summarize an empty set of results")
    lo, hi = float(arr.min()), float(arr.max())
    # clamped: summation rounding can push the mean of equal values past them
    mean = min(max(float(arr.mean()), lo), hi)
    return {"max": hi, "min": lo, "mean": mean, "median": float(np.median(arr))}


@dataclass
class SummaryTable:
    """Final-regret statistics, one column per sweep-axis value."""

    axis: str
    frame: pd.DataFrame
    per_alpha: pd.DataFrame

    def check_ordering(self) -> None:
        for column in self.frame.columns:
            stats = self.frame[column]
            if not (stats["min"] <= stats["median"] <= stats["max"]):
                raise ValueError(f"Summary column {column} violates min <= median <= max")
            if not (stats["min"] <= stats["mean"] <= stats["max"]):
                raise ValueError(f"Summary column {column} violates min <= mean <= max")

    def write(self, out_dir: Path) -> Tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary_path = out_dir / "summary.csv"
        per_alpha_path = out_dir / "per_alpha.csv"
        self.frame.to_csv(summary_path, index_label="statistic")
        self.per_alpha.to_csv(per_alpha_path, index=False)
        return summary_path, per_alpha_path


def _column_name(axis: str, value: Optional[int]) -> str:
    return "final_regret" if value is None else f"{axis}={value}"


def sweep_tasks(
    config: ExperimentConfig, sweep: SweepSection, log_root: Optional[Path] = None
) -> List[RunTask]:
    """Expand a sweep into independent runs.

    On the ``train_size`` axis only DOPLINUCB depends on the axis value, so
    the fixed-alpha runs and OPLINUCB run once and are shared by every column,
    and DOPLINUCB is skipped at size 0.
    """
    grid = config.policy.alpha_grid()
    fixed = [PolicySpec("fixed", alpha=alpha, alpha_index=i) for i, alpha in enumerate(grid.values)]
    oplinucb = PolicySpec("oplinucb")

    def log_dir(name: str) -> Optional[Path]:
        if log_root is None or not sweep.write_logs:
            return None
        return Path(log_root) / name

    def runs(specs, column=None, switch_period=None, name="shared") -> List[RunTask]:
        return [
            RunTask(config, spec, seed, switch_period, log_dir(name), column)
            for spec in specs
            for seed in config.seeds
        ]

    if sweep.axis == "train_size":
        tasks = runs(fixed + [oplinucb])
        for size in sweep.values:
            if size > 0:
                spec = PolicySpec("doplinucb", warmup_rounds=size)
                tasks += runs([spec], column=size, name=_column_name(sweep.axis, size))
        return tasks

    columns: List[Optional[int]] = list(sweep.values) or [None]
    tasks = []
    for column in columns:
        tasks += runs(
            fixed + [oplinucb, PolicySpec("doplinucb")],
            column=column,
            switch_period=column if sweep.axis == "switch_period" else None,
            name="all" if column is None else _column_name(sweep.axis, column),
        )
    return tasks


def build_summary(
    config: ExperimentConfig,
    sweep: SweepSection,
    results: Dict[Hashable, RunResult],
) -> SummaryTable:
    grid = config.policy.alpha_grid()
    seeds = config.seeds
    shared = sweep.axis == "train_size"

    def seed_values(column: Optional[int], label: str) -> List[float]:
        return [results[(column, label, seed)].final_regret for seed in seeds]

    columns: List[Optional[int]] = list(sweep.values) or [None]
    table: Dict[str, List[float]] = {}
    per_alpha_rows = []
    for column in columns:
        name = _column_name(sweep.axis, column)
        source = None if shared else column
        alpha_means = []
        for i, alpha in enumerate(grid.values):
            values = seed_values(source, PolicySpec("fixed", alpha=alpha, alpha_index=i).label)
            alpha_means.append(float(np.mean(values)))
            per_alpha_rows.append(
                {
                    "axis_value": name,
                    "alpha": alpha,
                    "mean_final_regret": alpha_means[-1],
                    **{f"seed_{seed}": value for seed, value in zip(seeds, values)},
                }
            )
        stats = summarize(alpha_means)
        oplinucb = float(np.mean(seed_values(source, "oplinucb")))
        if shared:
            doplinucb = (
                math.nan
                if column == 0
                else float(np.mean(seed_values(column, PolicySpec("doplinucb", warmup_rounds=column).label)))
            )
        else:
            doplinucb = float(np.mean(seed_values(column, "doplinucb")))
        table[name] = [stats[row] for row in SUMMARY_ROWS[:4]] + [oplinucb, doplinucb]
        logger.info(
            "sweep_column",
            extra={
                "column": name,
                "oplinucb_beats_median": oplinucb <= stats["median"],
                "doplinucb_beats_median": doplinucb < stats["median"],
                "doplinucb_beats_min": doplinucb < stats["min"],
            },
        )

    frame = pd.DataFrame(table, index=list(SUMMARY_ROWS))
    return SummaryTable(axis=sweep.axis, frame=frame, per_alpha=pd.DataFrame(per_alpha_rows))


async def sweep_grid_async(
    config: ExperimentConfig,
    out_dir: Optional[Path] = None,
    jobs: Optional[int] = None,
) -> SummaryTable:
    sweep = config.require_sweep()
    prepare_data(config)
    log_root = None if out_dir is None else Path(out_dir) / "logs"
    tasks = sweep_tasks(config, sweep, log_root)
    logger.info("Starting sweep", extra={"axis": sweep.axis, "runs": len(tasks)})
    results = await RunPool(jobs).run(tasks, execute_task, _task_key)
    table = build_summary(config, sweep, results)
    table.check_ordering()
    if out_dir is not None:
        table.write(Path(out_dir))
    return table


def sweep_grid(
    config: ExperimentConfig,
    out_dir: Optional[Path] = None,
    jobs: Optional[int] = None,
) -> SummaryTable:
    """Run every grid alpha plus OPLINUCB and DOPLINUCB over all seeds."""
    return asyncio.run(sweep_grid_async(config, out_dir, jobs))


def parse_log_name(path: Path) -> Tuple[str, int]:
    name = Path(path).name
    if not name.endswith(LOG_SUFFIX) or SEED_SEPARATOR not in name:
        raise AlignmentError(f"Not a round log file name: {name}")
    label, _, seed = name[: -len(LOG_SUFFIX)].rpartition(SEED_SEPARATOR)
    try:
        return label, int(seed)
    except ValueError as e:
        raise AlignmentError(f"Not a round log file name: {name}") from e


def collect_logs(inputs: Sequence[Path]) -> List[Path]:
    """Expand directories into the round logs beneath them."""
    logs: List[Path] = []
    for item in map(Path, inputs):
        if item.is_dir():
            logs.extend(sorted(item.rglob(f"*{SEED_SEPARATOR}*{LOG_SUFFIX}")))
        else:
            logs.append(item)
    return logs


def emit_plotdata(logs: Sequence[Path], out_dir: Path) -> List[Path]:
    """Write ``t, mean, min, max`` of cumulative regret over seeds per policy.

    Every group is checked before any file is written.
    """
    if not logs:
        raise AlignmentError("No round logs to report")
    nested = len({Path(log).parent for log in logs}) > 1
    groups: Dict[Tuple[str, str], List[Path]] = {}
    for log in logs:
        label, _ = parse_log_name(log)
        prefix = Path(log).parent.name if nested else ""
        groups.setdefault((prefix, label), []).append(Path(log))

    plots: Dict[Path, pd.DataFrame] = {}
    for (prefix, label), paths in sorted(groups.items()):
        frames = [pd.read_csv(path) for path in paths]
        t = frames[0]["t"].to_numpy()
        for path, frame in zip(paths, frames):
            if len(frame) != len(t) or not np.array_equal(frame["t"].to_numpy(), t):
                raise AlignmentError(
                    f"Log {path} does not share the horizon of {paths[0]} ({len(frame)} vs {len(t)} rounds)"
                )
        stacked = np.column_stack([frame["cumulative_regret"].to_numpy(dtype=float) for frame in frames])
        plots[Path(out_dir) / prefix / f"plot_{label}.csv"] = pd.DataFrame(
            {
                "t": t,
                "mean": stacked.mean(axis=1),
                "min": stacked.min(axis=1),
                "max": stacked.max(axis=1),
            }
        )

    for path, plot in plots.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        plot.to_csv(path, index=False)
    logger.info("Wrote plot data", extra={"files": len(plots), "logs": len(logs)})
    return list(plots)
