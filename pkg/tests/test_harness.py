import json
import runpy

import numpy as np
import pytest

from antflow.graph import MarkedGraph, cone_graph, single_edge_graph, two_paths_graph
from antflow.harness import (
    ExperimentConfig,
    HarnessError,
    emit_plot_script,
    geometric_schedule,
    run_experiment,
    verify_suite,
)
from antflow.limits import predict_limit


def test_geometric_schedule_shape():
    sched = geometric_schedule(10_000)
    assert sched[0] >= 1
    assert sched[-1] == 10_000
    assert all(b > a for a, b in zip(sched, sched[1:]))
    # interior steps grow by about the fixed ratio; the last one just
    # clamps to n_ants and may be shorter
    assert 1.15 < sched[-2] / sched[-3] < 1.35


def test_geometric_schedule_small_and_invalid():
    assert geometric_schedule(1) == (1,)
    with pytest.raises(HarnessError):
        geometric_schedule(0)
    with pytest.raises(HarnessError):
        geometric_schedule(100, ratio=1.0)


def test_config_validation():
    g = cone_graph()
    with pytest.raises(HarnessError):
        ExperimentConfig(g, n_ants=0)
    with pytest.raises(HarnessError):
        ExperimentConfig(g, n_ants=100, replicas=0)
    with pytest.raises(HarnessError):
        ExperimentConfig(g, n_ants=100, schedule=(50, 20))
    with pytest.raises(HarnessError):
        ExperimentConfig(g, n_ants=100, schedule=(50, 200))
    with pytest.raises(HarnessError):
        ExperimentConfig(g, n_ants=100, tolerance=0.0)
    tol = {e: 0.1 for e in g.edge_ids}
    tol["1"] = 0.5
    cfg = ExperimentConfig(g, n_ants=100, tolerance=tol)
    assert cfg.edge_tolerance("1") == 0.5
    assert cfg.edge_tolerance("2") == 0.1
    with pytest.raises(KeyError):
        cfg.edge_tolerance("missing")  # per-edge maps are explicit


def test_single_edge_experiment_is_exact():
    cfg = ExperimentConfig(single_edge_graph(), n_ants=1000, replicas=3, seed=0)
    rep = run_experiment(cfg)
    # every ant crosses the only edge: W(n)/n = (n+1)/n exactly
    assert rep.mean["a"] == pytest.approx(1001 / 1000, abs=1e-15)
    assert rep.std["a"] == 0.0
    assert rep.passed is True
    assert rep.deviation == pytest.approx(1 / 1000, abs=1e-15)


def test_reports_are_deterministic(tmp_path):
    g = cone_graph()
    cfg = ExperimentConfig(g, n_ants=3000, replicas=3, seed=11, label="det")
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    rep_a = run_experiment(cfg, out_dir=out_a)
    rep_b = run_experiment(cfg, out_dir=out_b)
    assert rep_a.mean == rep_b.mean and rep_a.std == rep_b.std
    for r in range(3):
        name = f"replica_{r}.csv"
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    report = json.loads((out_a / "report.json").read_text())
    assert report["label"] == "det"
    assert report["passed"] in (True, False)
    assert set(report["mean"]) == set(g.edge_ids)


def test_experiment_against_explicit_target():
    g = two_paths_graph(2, 2)
    cfg = ExperimentConfig(g, n_ants=20_000, replicas=4, seed=3,
                           target=predict_limit(g), tolerance=0.05)
    rep = run_experiment(cfg)
    assert rep.passed is True
    assert rep.deviation < 0.05
    assert set(rep.per_edge_pass) == set(g.edge_ids)


def test_experiment_without_prediction_reports_only():
    g = MarkedGraph(
        ["N", "A", "B", "F"],
        [("1", "N", "A"), ("2", "N", "B"), ("3", "A", "B"), ("4", "A", "F"),
         ("5", "B", "F"), ("6", "N", "F")],
        "N", "F",
    )
    cfg = ExperimentConfig(g, n_ants=500, replicas=2, seed=5)
    rep = run_experiment(cfg)
    assert rep.prediction is None
    assert rep.passed is None and rep.deviation is None
    assert set(rep.mean) == set(g.edge_ids)


def test_tight_tolerance_fails_honestly():
    cfg = ExperimentConfig(cone_graph(), n_ants=2000, replicas=2, seed=7,
                           tolerance=1e-6)
    rep = run_experiment(cfg)
    assert rep.passed is False
    assert any(not ok for ok in rep.per_edge_pass.values())


# ---------------------------------------------------------------------------
# verification battery


def test_quick_suite_passes():
    out = verify_suite("quick", seed=42)
    assert out["passed"] is True
    assert out["floor_consistent"] is True
    assert out["strict_failures"] == []
    assert len(out["entries"]) >= 8
    names = {e["name"] for e in out["entries"]}
    assert "closed-form-vs-solver" in names
    assert "simulation-identities" in names


def test_unknown_level_rejected():
    with pytest.raises(HarnessError):
        verify_suite("medium")


# ---------------------------------------------------------------------------
# plot scripts


def test_plot_script_runs_and_renders(tmp_path):
    g = cone_graph()
    cfg = ExperimentConfig(g, n_ants=2000, replicas=1, seed=9)
    run_experiment(cfg, out_dir=tmp_path)
    csv = tmp_path / "replica_0.csv"
    script = emit_plot_script(csv, prediction=predict_limit(g),
                              out_base=str(tmp_path / "demo"))
    path = tmp_path / "plot.py"
    path.write_text(script)
    compile(script, str(path), "exec")  # syntactically sound
    runpy.run_path(str(path), run_name="__main__")
    assert (tmp_path / "demo_trajectories.png").stat().st_size > 0
    # the four-edge family also gets a phase-plane view
    assert (tmp_path / "demo_phase.png").stat().st_size > 0


def test_plot_script_without_prediction(tmp_path):
    g = two_paths_graph(2, 2)
    cfg = ExperimentConfig(g, n_ants=500, replicas=1, seed=10)
    run_experiment(cfg, out_dir=tmp_path)
    script = emit_plot_script(tmp_path / "replica_0.csv",
                              out_base=str(tmp_path / "bare"))
    (tmp_path / "bare.py").write_text(script)
    runpy.run_path(str(tmp_path / "bare.py"), run_name="__main__")
    assert (tmp_path / "bare_trajectories.png").stat().st_size > 0
    assert not (tmp_path / "bare_phase.png").exists()


def test_plot_script_handles_empty_series(tmp_path):
    csv = tmp_path / "empty.csv"
    csv.write_text("n,1,2\n")
    script = emit_plot_script(csv, out_base=str(tmp_path / "none"))
    (tmp_path / "none.py").write_text(script)
    runpy.run_path(str(tmp_path / "none.py"), run_name="__main__")
    assert (tmp_path / "none_trajectories.png").stat().st_size > 0
