import json
import time

import numpy as np
import pytest

from dcpl.cli import MetricsRecord, main
from dcpl.dataset import Dataset
from dcpl.model import ModelParams

BENCH_SEEDS = (2019, 2020, 2021)
_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture
def tiny_dataset():
    """Four samples, two classes, hand-sized features."""
    ff = np.array([[1.0, 0.0], [0.9, 0.2], [0.0, 1.0], [0.1, 0.8]])
    fp = np.array([[2.0, 0.1], [1.5, 0.3], [0.2, 1.7], [0.1, 2.2]])
    return Dataset(ff, fp, 2, true_labels=np.array([0, 0, 1, 1]))


@pytest.fixture
def tiny_head():
    return ModelParams(np.array([[3.0, -3.0], [-3.0, 3.0]]), np.zeros(2))


def _cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"dcpl {' '.join(map(str, argv))} exited with {code}"


@pytest.fixture(scope="session")
def benchmark_runs(tmp_path_factory):
    """Default benchmark through the CLI: per seed, metrics of all three adaptation modes.

    Configs omit every hyperparameter; the seed is passed on the command line.
    """
    root = tmp_path_factory.mktemp("bench")
    runs = {}
    for seed in BENCH_SEEDS:
        d = root / str(seed)
        d.mkdir()
        (d / "gen.json").write_text(json.dumps({"synth": {}}))
        _cli("gen-synth", "--config", d / "gen.json", "--out", d / "data", "--seed", seed)
        (d / "src.json").write_text(json.dumps({"source": "data/source.dcpl"}))
        _cli("train-source", "--config", d / "src.json", "--out", d / "data", "--seed", seed)
        (d / "adapt.json").write_text(json.dumps(
            {"target": "data/target.dcpl", "source_head": "data/source_head.dcph"}))
        runs[seed] = {"dir": d}
        for mode in ("adapt", "adapt-identity", "adapt-oracle"):
            out = d / mode
            start = time.perf_counter()
            _cli(mode, "--config", d / "adapt.json", "--out", out, "--seed", seed)
            runs[seed][mode + ":seconds"] = time.perf_counter() - start
            text = (out / "metrics.json").read_text()
            runs[seed][mode] = MetricsRecord.from_json(text)
            runs[seed][mode + ":bytes"] = (out / "metrics.json").read_bytes()
    return runs

