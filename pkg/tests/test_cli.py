import json
import subprocess
import sys

import pytest

from dynesom.cli import main

CONFIG = """
[network]
n = 6
r_c = 0.5
seed = 2

[problem]
p = 3
horizon = 40
change_period = 20
noise_std = 0.5
seed = 2

[tuning]
steps = 20
EXTRA = [0.01, 0.05]
NN0 = [0.1, 1.0]
DGD = [0.01, 0.05]

[solvers.ESOM-1]
method = "ESOM"
alpha = 2.0
epsilon = 0.1
K = 1

[solvers.EXTRA]
method = "EXTRA"
step_size = "auto"
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(CONFIG)
    return path


def last_json(text):
    return json.loads(text.strip().splitlines()[-1])


def test_run_outputs(config, tmp_path, capsys):
    assert main(["run", "--config", str(config), "--out", str(tmp_path / "o")]) == 0
    out = last_json(capsys.readouterr().out)
    assert out["status"] == "ok" and set(out["solvers"]) == {"ESOM-1", "EXTRA"}
    for name in ("trajectory.csv", "plot_data.json", "node_trace.csv", "metadata.json",
                 "instance.npz", "graph.txt", "weights.csv"):
        assert (tmp_path / "o" / name).exists()


def test_run_twice_byte_identical(config, tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--config", str(config), "--out", str(tmp_path / d)]) == 0
    for name in ("trajectory.csv", "node_trace.csv", "plot_data.json", "metadata.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_solver_and_seed_flags(config, tmp_path, capsys):
    assert main(["run", "--config", str(config), "--out", str(tmp_path / "o"),
                 "--solvers", "EXTRA", "--seed", "5"]) == 0
    meta = json.loads((tmp_path / "o" / "metadata.json").read_text())
    assert list(meta["solvers"]) == ["EXTRA"] and meta["config"]["network"]["seed"] == 5


def test_replay_reproduces_run(config, tmp_path):
    assert main(["run", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
    assert main(["replay", "--run", str(tmp_path / "a"), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == \
        (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert main(["replay", "--instance", str(tmp_path / "a" / "instance.npz"),
                 "--graph", str(tmp_path / "a" / "graph.txt"), "--config", str(config),
                 "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == \
        (tmp_path / "c" / "trajectory.csv").read_bytes()


def test_validate(config, capsys):
    assert main(["validate", "--config", str(config)]) == 0
    out = last_json(capsys.readouterr().out)
    assert out["status"] == "ok" and all(out["checks"].values())


def test_sweep(config, tmp_path):
    assert main(["sweep", "--config", str(config), "--out", str(tmp_path), "--alpha", "2",
                 "--epsilon", "0.1", "--K", "0", "--steps", "200", "--static-only"]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("solver,alpha,epsilon,K")
    assert lines[1].startswith("ESOM,2.0,0.1,0,")


@pytest.mark.parametrize("argv, kind", [
    (["run", "--out", "x", "--config", "/nonexistent.toml"], "ConfigError"),
    (["run", "--out", "x", "--solvers", "FOO"], "ConfigError"),
    (["run"], "UsageError"),
    (["fly"], "UsageError"),
    (["replay", "--out", "x"], "UsageError"),
])
def test_errors_are_machine_readable(argv, kind, capsys):
    assert main(argv) == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["status"] == "error" and err["kind"] == kind and err["message"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dynesom", "run", "--out", str(tmp_path),
                           "--solvers", "BAD"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["kind"] == "ConfigError"
