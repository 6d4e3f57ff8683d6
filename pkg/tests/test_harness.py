"""Test cases for runs, sweeps, summaries, and plot data."""

import logging

import numpy as np
import pandas as pd
import pytest

from alpha_bandit.config import parse_config
from alpha_bandit.environments import make_synthetic
from alpha_bandit.harness import (
    LOG_COLUMNS,
    SUMMARY_ROWS,
    AlignmentError,
    PolicySpec,
    SummaryTable,
    build_environment,
    collect_logs,
    emit_plotdata,
    parse_log_name,
    run_experiment,
    run_seeds,
    simulate,
    summarize,
    sweep_grid,
    sweep_tasks,
)
from alpha_bandit.policies import FixedAlphaPolicy


def write_log(path, regrets, start=0):
    path.parent.mkdir(parents=True, exist_ok=True)
    n = len(regrets)
    pd.DataFrame(
        {
            "t": np.arange(start, start + n),
            "alpha": 0.1,
            "arm": 0,
            "reward": 1.0,
            "optimal_reward": 1.0,
            "cumulative_regret": regrets,
        }
    ).to_csv(path, index=False)
    return path


def test_run_experiment_writes_round_log(config_data, tmp_path):
    result = run_experiment(parse_config(config_data), 7, tmp_path)
    assert result.label == "fixed_a0.1"
    assert result.rounds == 200
    assert result.log_path == tmp_path / "fixed_a0.1__seed7.csv"
    frame = pd.read_csv(result.log_path)
    assert tuple(frame.columns) == LOG_COLUMNS
    assert frame["t"].tolist() == list(range(200))
    assert (frame["alpha"] == 0.1).all()
    assert result.final_regret == frame["cumulative_regret"].iloc[-1]
    np.testing.assert_allclose(
        frame["cumulative_regret"], np.cumsum(frame["optimal_reward"] - frame["reward"])
    )


def test_run_experiment_is_byte_identical(config_data, tmp_path):
    config_data["horizon"] = 100
    config = parse_config(config_data)
    first = run_experiment(config, 7, tmp_path / "a")
    second = run_experiment(config, 7, tmp_path / "b")
    assert first.log_path.read_bytes() == second.log_path.read_bytes()
    assert first.final_regret == second.final_regret


@pytest.mark.parametrize("kind", ["oplinucb", "doplinucb"])
def test_meta_policies_are_reproducible(config_data, tmp_path, kind):
    config_data["policy"]["kind"] = kind
    config = parse_config(config_data)
    first = run_experiment(config, 3, tmp_path / "a")
    second = run_experiment(config, 3, tmp_path / "b")
    assert first.log_path.read_bytes() == second.log_path.read_bytes()
    assert first.label == kind


@pytest.mark.parametrize("tie_break", ["lowest-index", "seeded-random"])
def test_single_value_grid_runs_agree_across_kinds(config_data, tmp_path, tie_break):
    config_data["tie_break"] = tie_break
    config_data["policy"].update({"grid": "0.2", "alpha": 0.2})
    frames = []
    for kind in ("fixed", "oplinucb", "doplinucb"):
        config_data["policy"]["kind"] = kind
        result = run_experiment(parse_config(config_data), 0, tmp_path / kind)
        frames.append(pd.read_csv(result.log_path))
    pd.testing.assert_frame_equal(frames[0], frames[1])
    pd.testing.assert_frame_equal(frames[0], frames[2])


def test_seeds_get_independent_environment_streams(config_data):
    config = parse_config(config_data)
    first, again, other = (build_environment(config, seed) for seed in (0, 0, 1))
    np.testing.assert_array_equal(first.weights, again.weights)
    assert not np.array_equal(first.weights, other.weights)


def test_replay_oracle_has_zero_regret(replay_config_data):
    replay_config_data["policy"]["kind"] = "oracle"
    result = run_experiment(parse_config(replay_config_data), 0)
    assert result.rounds == 300
    assert result.final_regret == 0.0


def test_replay_regret_is_rounds_minus_reward(replay_config_data, tmp_path):
    result = run_experiment(parse_config(replay_config_data), 0, tmp_path)
    frame = pd.read_csv(result.log_path)
    assert (frame["optimal_reward"] == 1.0).all()
    assert result.final_regret == result.rounds - frame["reward"].sum()


def test_replay_horizon_caps_rounds(replay_config_data):
    replay_config_data["horizon"] = 40
    assert run_experiment(parse_config(replay_config_data), 0).rounds == 40


def test_shuffled_replay_order_depends_on_seed(replay_config_data):
    replay_config_data["environment"]["ordering"] = "shuffled"
    config = parse_config(replay_config_data)
    first, again, other = (build_environment(config, seed) for seed in (4, 4, 5))
    np.testing.assert_array_equal(first.contexts, again.contexts)
    assert not np.array_equal(first.contexts, other.contexts)


def test_replay_writes_and_reuses_dataset_cache(replay_config_data, tmp_path):
    cache = tmp_path / "cache" / "encoded.csv"
    replay_config_data["environment"]["cache"] = str(cache)
    config = parse_config(replay_config_data)
    first = run_experiment(config, 0)
    assert cache.read_text().splitlines()[0].startswith("continuous:age,")
    assert run_experiment(config, 0) == first


def test_run_summary_is_logged(config_data, caplog):
    with caplog.at_level(logging.INFO, logger="alpha-bandit.harness"):
        result = run_experiment(parse_config(config_data), 7)
    record = next(r for r in caplog.records if r.getMessage() == "run_summary")
    assert record.run["policy"] == "fixed_a0.1"
    assert record.run["seed"] == 7
    assert record.run["final_regret"] == result.final_regret
    assert record.run["log_path"] is None


def test_run_seeds_matches_individual_runs(config_data, tmp_path):
    config = parse_config(config_data)
    results = run_seeds(config, [0, 1], tmp_path, jobs=1)
    assert [r.seed for r in results] == [0, 1]
    assert results[1] == run_experiment(config, 1, tmp_path)


def test_summarize_single_and_repeated_values():
    assert summarize([4.0]) == {"max": 4.0, "min": 4.0, "mean": 4.0, "median": 4.0}
    stats = summarize([0.1] * 7)
    assert stats["min"] <= stats["mean"] <= stats["max"]
    with pytest.raises(ValueError, match="empty"):
        summarize([])


def test_summary_ordering_check():
    frame = pd.DataFrame({"c": [1.0, 2.0, 1.5, 3.0, 0.0, 0.0]}, index=list(SUMMARY_ROWS))
    with pytest.raises(ValueError, match="min <= median <= max"):
        SummaryTable("none", frame, pd.DataFrame()).check_ordering()


def test_sweep_without_axis(config_data, tmp_path):
    config = parse_config(config_data)
    table = sweep_grid(config, tmp_path, jobs=1)
    assert list(table.frame.columns) == ["final_regret"]
    assert list(table.frame.index) == list(SUMMARY_ROWS)
    assert len(table.per_alpha) == 3
    assert list(table.per_alpha.columns) == [
        "axis_value",
        "alpha",
        "mean_final_regret",
        "seed_0",
        "seed_1",
    ]

    means = table.per_alpha["mean_final_regret"]
    column = table.frame["final_regret"]
    assert column["max"] == means.max()
    assert column["min"] == means.min()
    assert column["median"] == means.median()
    assert column["mean"] == pytest.approx(means.mean())

    config_data["policy"]["kind"] = "oplinucb"
    oplinucb = [run_experiment(parse_config(config_data), seed).final_regret for seed in (0, 1)]
    assert column["OPLINUCB"] == np.mean(oplinucb)

    assert (tmp_path / "summary.csv").read_text().startswith("statistic,final_regret\nmax,")
    assert (tmp_path / "per_alpha.csv").exists()
    assert len(list((tmp_path / "logs" / "all").glob("*.csv"))) == 10


def test_sweep_single_alpha_grid_collapses_statistics(config_data):
    config_data["policy"]["grid"] = "0.2"
    column = sweep_grid(parse_config(config_data), jobs=1).frame["final_regret"]
    assert column["max"] == column["min"] == column["mean"] == column["median"]


def test_sweep_train_size_axis(config_data, tmp_path):
    config_data["sweep"] = {"axis": "train_size", "values": [0, 50], "write_logs": True}
    config = parse_config(config_data)
    tasks = sweep_tasks(config, config.sweep, tmp_path / "logs")
    assert len(tasks) == (3 + 1) * 2 + 2
    assert {t.spec.label for t in tasks if t.column == 50} == {"doplinucb_w50"}

    table = sweep_grid(config, tmp_path, jobs=1)
    frame = table.frame
    assert list(frame.columns) == ["train_size=0", "train_size=50"]
    assert np.isnan(frame.loc["DOPLINUCB", "train_size=0"])
    assert not np.isnan(frame.loc["DOPLINUCB", "train_size=50"])
    pd.testing.assert_series_equal(
        frame["train_size=0"].iloc[:5], frame["train_size=50"].iloc[:5], check_names=False
    )
    assert (tmp_path / "logs" / "shared" / "oplinucb__seed0.csv").exists()
    assert (tmp_path / "logs" / "train_size=50" / "doplinucb_w50__seed1.csv").exists()


def test_sweep_switch_period_axis(replay_config_data, tmp_path):
    replay_config_data["environment"].update(kind="switching", switch_period=100)
    replay_config_data["sweep"] = {"axis": "switch_period", "values": [50, 100], "write_logs": False}
    config = parse_config(replay_config_data)
    table = sweep_grid(config, tmp_path, jobs=1)
    assert list(table.frame.columns) == ["switch_period=50", "switch_period=100"]
    assert set(table.per_alpha["axis_value"]) == {"switch_period=50", "switch_period=100"}
    assert not (tmp_path / "logs").exists()
    table.check_ordering()


def test_sweep_parallel_matches_serial(config_data, tmp_path):
    config = parse_config(config_data)
    serial = sweep_grid(config, tmp_path / "serial", jobs=1)
    parallel = sweep_grid(config, tmp_path / "parallel", jobs=2)
    pd.testing.assert_frame_equal(serial.frame, parallel.frame)
    for name in ("summary.csv", "per_alpha.csv"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()


def test_parse_log_name():
    assert parse_log_name("logs/fixed_a0.1__seed3.csv") == ("fixed_a0.1", 3)
    assert parse_log_name("doplinucb_w50__seed12.csv") == ("doplinucb_w50", 12)
    for bad in ("summary.csv", "oplinucb__seedX.csv", "oplinucb__seed1.txt"):
        with pytest.raises(AlignmentError, match="Not a round log"):
            parse_log_name(bad)


def test_emit_plotdata_single_log(tmp_path):
    log = write_log(tmp_path / "logs" / "oplinucb__seed0.csv", [0.0, 1.0, 1.0, 2.0])
    [plot] = emit_plotdata([log], tmp_path / "plots")
    frame = pd.read_csv(plot)
    assert plot.name == "plot_oplinucb.csv"
    assert list(frame.columns) == ["t", "mean", "min", "max"]
    assert (frame["mean"] == frame["min"]).all() and (frame["min"] == frame["max"]).all()


def test_emit_plotdata_mean_over_seeds(tmp_path):
    curves = [[0, 1, 2, 2], [1, 1, 1, 3], [0, 0, 2, 4]]
    logs = [
        write_log(tmp_path / "logs" / f"fixed_a0.1__seed{seed}.csv", curve)
        for seed, curve in enumerate(curves)
    ]
    [plot] = emit_plotdata(logs, tmp_path / "plots")
    frame = pd.read_csv(plot)
    np.testing.assert_allclose(frame["mean"], np.mean(curves, axis=0))
    np.testing.assert_array_equal(frame["min"], np.min(curves, axis=0))
    np.testing.assert_array_equal(frame["max"], np.max(curves, axis=0))


def test_emit_plotdata_rejects_empty_and_misaligned(tmp_path):
    out = tmp_path / "plots"
    with pytest.raises(AlignmentError, match="No round logs"):
        emit_plotdata([], out)
    good = write_log(tmp_path / "logs" / "oplinucb__seed0.csv", [0.0, 1.0])
    short = write_log(tmp_path / "logs" / "fixed_a0.1__seed0.csv", [0.0, 1.0, 1.0])
    other = write_log(tmp_path / "logs" / "fixed_a0.1__seed1.csv", [0.0, 0.0])
    with pytest.raises(AlignmentError, match="does not share the horizon"):
        emit_plotdata([good, short, other], out)
    assert not out.exists()


def test_emit_plotdata_groups_by_directory(tmp_path):
    logs = [
        write_log(tmp_path / "logs" / "switch_period=50" / "oplinucb__seed0.csv", [0.0, 1.0]),
        write_log(tmp_path / "logs" / "switch_period=100" / "oplinucb__seed0.csv", [1.0, 1.0]),
    ]
    found = collect_logs([tmp_path / "logs"])
    assert sorted(found) == sorted(logs)
    plots = emit_plotdata(found, tmp_path / "plots")
    assert sorted(p.relative_to(tmp_path / "plots").as_posix() for p in plots) == [
        "switch_period=100/plot_oplinucb.csv",
        "switch_period=50/plot_oplinucb.csv",
    ]


def test_policy_spec_labels():
    assert PolicySpec("fixed", alpha=0.25).label == "fixed_a0.25"
    assert PolicySpec("doplinucb").label == "doplinucb"
    assert PolicySpec("doplinucb", warmup_rounds=1000).label == "doplinucb_w1000"
    assert PolicySpec("oplinucb").label == "oplinucb"


def test_fine_grid_labels_stay_distinct(config_data, tmp_path):
    assert PolicySpec("fixed", alpha=1.0000001).label != PolicySpec("fixed", alpha=1.0000002).label
    config_data["horizon"] = 30
    config_data["policy"]["grid"] = "1.0000001:1.0000004:0.0000001"
    config = parse_config(config_data)
    grid = config.policy.alpha_grid()
    assert len(grid) >= 2

    table = sweep_grid(config, tmp_path, jobs=1)
    assert len(table.per_alpha) == len(grid)
    names = {path.name for path in (tmp_path / "logs" / "all").iterdir()}
    assert len([name for name in names if name.startswith("fixed_a")]) == len(grid) * 2


@pytest.mark.slow
def test_fixed_alpha_regret_grows_sublinearly():
    weights = np.array([[1.0, 0.0], [-1.0, 0.0]])
    at_2000, at_4000 = [], []
    for seed in range(10):
        env = make_synthetic(2, 2, seed, weights=weights, horizon=4000)
        log = simulate(FixedAlphaPolicy(0.1, 2, 2), env, 4000)
        regret = np.cumsum([r.optimal_reward - r.reward for r in log])
        at_2000.append(regret[1999])
        at_4000.append(regret[3999])
    assert np.mean(at_4000) / np.mean(at_2000) < 1.8
