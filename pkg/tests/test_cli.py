import json

import numpy as np
import pytest

from mixedpinn import analytic, fem
from mixedpinn.cli import EXIT_DIVERGED, EXIT_USAGE, main

TINY = ["--set", "collocation.interior=100", "--set", "network.layers=1",
        "--set", "network.neurons=5", "--set", "fem.n=20", "--set", "evaluation.grid=21"]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    for name, seed in (("a", 0), ("b", 0), ("c", 5)):
        assert main(["run", "--config", "homogeneous", "--out", str(root / name), "--seed", str(seed),
                     "--set", "training.n_A=5"] + TINY) == 0
    return root


def test_run_writes_all_artifacts(runs):
    names = {p.name for p in (runs / "a").iterdir()}
    assert {"fem_reference.csv", "pinn_fields.csv", "metrics.json", "timing.json",
            "loss_history.csv", "resolved_config.cfg", "checkpoints"} <= names
    m = json.loads((runs / "a" / "metrics.json").read_text())
    assert m["status"] == "ok" and m["epochs"] == 5
    # exactly zero fields of the homogeneous problem have no relative error
    assert m["metrics"]["u_y"]["avg_rel_pct"] is None
    assert m["metrics"]["T"]["avg_rel_pct"] >= 0.0


def test_runs_are_deterministic(runs):
    a = json.loads((runs / "a" / "metrics.json").read_text())
    b = json.loads((runs / "b" / "metrics.json").read_text())
    assert a == b
    assert (runs / "a" / "pinn_fields.csv").read_bytes() == (runs / "b" / "pinn_fields.csv").read_bytes()
    c = json.loads((runs / "c" / "metrics.json").read_text())
    assert c["metrics"] != a["metrics"]


def test_resolved_config_reruns_identically(runs, tmp_path):
    cfg = runs / "a" / "resolved_config.cfg"
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "pinn_fields.csv").read_bytes() == (runs / "a" / "pinn_fields.csv").read_bytes()


def test_fem_reference_matches_closed_form(runs):
    pts, vals = fem.read_fields_csv(runs / "a" / "fem_reference.csv")
    ref = analytic.homogeneous_solution(pts[:, 0], pts[:, 1])
    assert np.max(np.abs(vals["T"] - ref["T"])) < 1e-12
    assert np.max(np.abs(vals["u_x"] - ref["u_x"])) < 1e-3


def test_zero_epoch_run_keeps_initial_network(tmp_path):
    assert main(["run", "--config", "homogeneous", "--out", str(tmp_path), "--set", "training.n_A=0"]
                + TINY) == 0
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["epochs"] == 0 and m["final_loss"] is None
    assert (tmp_path / "loss_history.csv").read_text().count("\n") == 1


def test_compare_run_with_itself_gives_zero_difference(runs, tmp_path):
    assert main(["compare", "--run-a", str(runs / "a"), "--run-b", str(runs / "b"),
                 "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "comparison.json").read_text())
    assert rep["a"]["metrics"] == rep["b"]["metrics"]
    pts_a, da = fem.read_fields_csv(tmp_path / "difference_a.csv")
    _, db = fem.read_fields_csv(tmp_path / "difference_b.csv")
    for f in da:
        assert np.array_equal(da[f], db[f])
    # and against its own predictions as reference the difference is exactly zero
    assert main(["compare", "--run-a", str(runs / "a"), "--run-b", str(runs / "b"),
                 "--reference", str(runs / "a" / "pinn_fields.csv"), "--out", str(tmp_path / "self")]) == 0
    _, d = fem.read_fields_csv(tmp_path / "self" / "difference_a.csv")
    assert all(np.all(v == 0.0) for v in d.values())


def test_compare_rejects_grid_mismatch(runs, tmp_path, capsys):
    other = tmp_path / "other"
    assert main(["run", "--config", "homogeneous", "--out", str(other), "--set", "training.n_A=0"]
                + TINY + ["--set", "evaluation.grid=11"]) == 0
    assert main(["compare", "--run-a", str(runs / "a"), "--run-b", str(other),
                 "--out", str(tmp_path / "cmp")]) == EXIT_USAGE
    assert "grid mismatch" in capsys.readouterr().err


@pytest.mark.parametrize("axis, position", [("x", 0.5), ("y", 0.25), ("x", 0.0), ("y", 1.0)])
def test_section_of_linear_temperature(runs, tmp_path, axis, position):
    out = tmp_path / "s.csv"
    assert main(["section", "--fields", str(runs / "a" / "fem_reference.csv"), "--axis", axis,
                 "--position", str(position), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == f"# section {axis} = {position!r}"
    header = lines[1].split(",")
    data = np.loadtxt(out, delimiter=",", skiprows=2)
    coord = data[:, 0]
    T = data[:, header.index("T [K]")]
    x = np.full_like(coord, position) if axis == "x" else coord
    assert np.allclose(T, 1.0 - x, atol=1e-12)
    assert header[0] == ("y [mm]" if axis == "x" else "x [mm]")


@pytest.mark.parametrize("position", [-0.1, 1.01])
def test_section_rejects_outside_positions(runs, position, capsys):
    assert main(["section", "--fields", str(runs / "a" / "pinn_fields.csv"), "--axis", "x",
                 "--position", str(position)]) == EXIT_USAGE
    assert "outside [0, 1]" in capsys.readouterr().err


def test_fem_verb_outputs(tmp_path):
    assert main(["fem", "--config", "geometry1_coupled", "--out", str(tmp_path),
                 "--set", "fem.n=16", "--set", "fem.convergence=8 16 32", "--threads", "1"]) == 0
    rep = json.loads((tmp_path / "fem_report.json").read_text())
    assert abs(rep["heat_in"] - rep["heat_out"]) <= 1e-10 * rep["heat_in"]
    assert len(rep["convergence"]) == 2
    assert (tmp_path / "fem_fields.vtk").read_text().startswith("# vtk DataFile")
    assert (tmp_path / "convergence.csv").read_text().startswith("coarse,fine,")


def test_invalid_config_key_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("[training]\nepochs = 3\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert "unknown key [training] epochs" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore:overflow encountered", "ignore:invalid value encountered")
def test_diverged_run_exits_nonzero_with_partial_artifacts(tmp_path):
    code = main(["run", "--config", "homogeneous", "--out", str(tmp_path), "--set", "training.n_A=5",
                 "--set", "training.optimizer=adam", "--set", "training.lr=1e200"] + TINY)
    assert code == EXIT_DIVERGED
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["status"] == "diverged"
    assert (tmp_path / "loss_history.csv").exists()


def test_parametric_run(tmp_path):
    assert main(["run", "--config", "parametric_w01", "--out", str(tmp_path), "--set", "training.n_A=4",
                 "--set", "parametric.ratios=1 2"] + TINY) == 0
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["query_ratio"] == 15.0 and m["w"] == 0.1
    t = json.loads((tmp_path / "timing.json").read_text())
    assert set(t["mean_epoch_seconds"]) == {"ratio=1", "ratio=2"}


def test_sweep_tables(tmp_path, capsys):
    assert main(["sweep", "--config", "sweep", "--out", str(tmp_path), "--set", "training.n_A=2",
                 "--set", "sweep.layers=1 2", "--set", "sweep.neurons=3",
                 "--set", "sweep.fixed_layers=1", "--set", "sweep.fixed_neurons=4"] + TINY) == 0
    rows = (tmp_path / "sweep_timing.csv").read_text().splitlines()
    assert rows[0].startswith("study,layers,neurons,parameters")
    assert len(rows) == 4
    out = capsys.readouterr().out
    assert "layers study" in out and "neurons study" in out and "per-epoch time" in out
