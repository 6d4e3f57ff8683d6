"""
Test configuration and fixtures.
"""

import copy
from pathlib import Path

import numpy as np
import pytest

ADULT_SAMPLE = """\
|1x3 Cross validator
39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K
50, Self-emp-not-inc, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, 13, United-States, <=50K

38, Private, 215646, HS-grad, 9, Divorced, Handlers-cleaners, Not-in-family, White, Male, 0, 0, 40, United-States, <=50K
53, Private, 234721, 11th, 7, Married-civ-spouse, Handlers-cleaners, Husband, Black, Male, 0, 0, 40, United-States, <=50K
28, Private, 338409, Bachelors, 13, Married-civ-spouse, Prof-specialty, Wife, Black, Female, 0, 0, 40, Cuba, <=50K
52, Self-emp-not-inc, 209642, HS-grad, 9, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, 45, United-States, >50K
31, Private, 45781, Masters, 14, Never-married, Prof-specialty, Not-in-family, White, Female, 14084, 0, 50, United-States, >50K
54, ?, 180211, Some-college, 10, Married-civ-spouse, ?, Husband, Asian-Pac-Islander, Male, 0, 0, 60, South, >50K.
"""

WORKCLASSES = ("Private", "Self-emp-not-inc", "State-gov", "?")


def adult_line(**fields) -> str:
    """One Adult-format line; keyword names use underscores for dashes."""
    values = {
        "age": "39",
        "workclass": "State-gov",
        "fnlwgt": "77516",
        "education": "Bachelors",
        "education_num": "13",
        "marital_status": "Never-married",
        "occupation": "Adm-clerical",
        "relationship": "Not-in-family",
        "race": "White",
        "sex": "Male",
        "capital_gain": "2174",
        "capital_loss": "0",
        "hours_per_week": "40",
        "native_country": "United-States",
        "income": "<=50K",
    }
    values.update({key: str(value) for key, value in fields.items()})
    return ", ".join(values.values())


def write_adult_file(path: Path, n_rows: int, seed: int = 0) -> Path:
    """Write ``n_rows`` synthetic Adult-format rows whose label follows education and hours."""
    rng = np.random.default_rng(seed)
    lines = []
    for _ in range(n_rows):
        education_num = int(rng.integers(1, 17))
        hours = int(rng.integers(10, 70))
        label = ">50K" if education_num + hours / 10 + rng.normal() > 14 else "<=50K"
        lines.append(
            adult_line(
                age=int(rng.integers(18, 80)),
                workclass=WORKCLASSES[int(rng.integers(len(WORKCLASSES)))],
                fnlwgt=int(rng.integers(20000, 400000)),
                education_num=education_num,
                sex=("Male", "Female")[int(rng.integers(2))],
                capital_gain=0,
                hours_per_week=hours,
                income=label,
            )
        )
    path.write_text("\n".join(lines) + "\n")
    return path


SYNTHETIC_CONFIG = {
    "master_seed": 11,
    "seeds": [0, 1],
    "horizon": 200,
    "output_dir": "runs",
    "tie_break": "lowest-index",
    "environment": {"kind": "synthetic", "d": 3, "K": 2},
    "policy": {
        "kind": "fixed",
        "alpha": 0.1,
        "grid": "0.1:0.3:0.1",
        "prior_successes": 1.0,
        "prior_failures": 1.0,
        "bernoulli_rewards": False,
        "warmup_rounds": 50,
        "window_size": 100,
        "refit_period": 50,
    },
    "ctree": {
        "significance": 0.05,
        "min_leaf_weight": 10,
        "max_depth": 4,
        "categorical_exhaustive_limit": 10,
    },
    "sweep": {"axis": "none", "write_logs": True},
}

SYNTHETIC_TOML = """\
master_seed = 11
seeds = [0, 1]
horizon = {horizon}
output_dir = "{output_dir}"
tie_break = "lowest-index"

[environment]
kind = "synthetic"
d = 3
K = 2

[policy]
kind = "{policy}"
alpha = 0.1
grid = "0.1:0.3:0.1"
prior_successes = 1.0
prior_failures = 1.0
bernoulli_rewards = false
warmup_rounds = 50
window_size = 100
refit_period = 50

[ctree]
significance = 0.05
min_leaf_weight = 10
max_depth = 4
categorical_exhaustive_limit = 10

[sweep]
axis = "none"
write_logs = true
"""


@pytest.fixture
def config_data():
    """Return a fresh, mutable copy of a small synthetic experiment config."""
    return copy.deepcopy(SYNTHETIC_CONFIG)


@pytest.fixture
def replay_config_data(tmp_path, config_data):
    """Config for a replay experiment over a generated Adult-format file."""
    write_adult_file(tmp_path / "adult.data", 300, seed=3)
    config_data["environment"] = {
        "kind": "replay",
        "paths": [str(tmp_path / "adult.data")],
        "ordering": "dataset",
    }
    config_data["horizon"] = 1000
    return config_data


@pytest.fixture
def write_synthetic_config(tmp_path):
    """Write the synthetic TOML config and return its path."""

    def write(name="experiment.toml", horizon=200, policy="fixed", output_dir=None):
        path = tmp_path / name
        out = output_dir or (tmp_path / "runs")
        path.write_text(
            SYNTHETIC_TOML.format(
                horizon=horizon, policy=policy, output_dir=Path(out).as_posix()
            )
        )
        return path

    return write


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def adult_sample():
    """Eight Adult records with a comment, a blank line and missing cells."""
    return ADULT_SAMPLE


@pytest.fixture
def adult_row():
    return adult_line


@pytest.fixture
def adult_writer():
    return write_adult_file

