import json
import math

import numpy as np
import pytest

from didcnc import cli, harness
from didcnc.harness import Scenario, ScenarioHashMismatch
from didcnc.placement import eval_placement_lp


def small(name="small_line", **changes):
    sc = harness.bundled(name)
    return sc.replace(**changes) if changes else sc


def test_bundled_scenarios_load():
    assert {"edge_grid", "small_line", "small_diamond", "small_cloud"} <= set(harness.bundled_names())
    with pytest.raises(KeyError):
        harness.bundled("nope")


def test_edge_grid_shape():
    w = harness.build_world(harness.edge_grid())
    g = w.graph
    assert g.n_nodes == 10 and g.cloud_index == g.index[10]
    assert len(w.clients) == 4 and len(w.sizes) == 8
    assert g.proc_capacity[g.index[5]] == 10_000 and g.proc_capacity[g.index[10]] == 20_000
    ix = g.index
    assert g.tx_capacity[g.link(ix[1], ix[2])] == 1000 and g.tx_capacity[g.link(ix[10], ix[1])] == 20


def test_scenario_round_trip_and_hash(tmp_path):
    sc = small()
    path = tmp_path / "s.json"
    sc.save(path)
    back = Scenario.load(path)
    assert back == sc and back.hash() == sc.hash()
    assert sc.replace(seed=4).hash() != sc.hash()


def test_scenario_validation():
    d = small().to_dict()
    with pytest.raises(ValueError):
        Scenario.from_dict({**d, "schema_version": 99})
    with pytest.raises(ValueError):
        Scenario.from_dict({**d, "bogus": 1})
    with pytest.raises(ValueError):
        Scenario.from_dict({**d, "policy": "random"})


def test_zero_horizon_writes_header_only(tmp_path):
    sc = small(horizon=0)
    res = harness.run(sc, tmp_path)
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == f"# scenario {sc.hash()}"
    assert len(lines) == 2 and lines[1].startswith("slot,")
    assert res.metrics.admitted == 0


def test_identical_runs_are_byte_identical(tmp_path):
    sc = small(horizon=3000, trace=True)
    harness.run(sc, tmp_path / "a")
    harness.run(sc, tmp_path / "b")
    for name in ("metrics.csv", "trace.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    other = small(horizon=3000, trace=True, seed=99)
    harness.run(other, tmp_path / "c")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "c" / "metrics.csv").read_bytes()


def test_hash_mismatch_is_detected(tmp_path):
    sc = small(horizon=100)
    harness.run(sc, tmp_path)
    harness.verify_output(tmp_path / "metrics.csv", sc)
    with pytest.raises(ScenarioHashMismatch):
        harness.verify_output(tmp_path / "metrics.csv", sc.replace(seed=1234))
    (tmp_path / "bad.csv").write_text("slot,backlog\n")
    with pytest.raises(ScenarioHashMismatch):
        harness.verify_output(tmp_path / "bad.csv", sc)


def test_zero_rate_is_stable():
    v, _ = harness.run_point(small(horizon=2000, warmup=200), 0.0)
    assert v.stable and v.slope == 0.0


def test_far_overload_is_unstable():
    sc = small(horizon=20_000, warmup=200)
    v, res = harness.run_point(sc, 50.0)       # LP limit is 9
    assert not v.stable
    assert res.simulator.t < sc.horizon         # stopped early


def test_light_load_is_stable_with_small_delay():
    v, _ = harness.run_point(small(horizon=6000, warmup=1000), 3.0)
    assert v.stable and v.mean_delay < 10


def test_stability_verdict_on_synthetic_series():
    class M:
        def __init__(self, b):
            self.b = np.asarray(b, dtype=float)

        def backlog_series(self):
            return np.arange(1, len(self.b) + 1) * 100, self.b

        def mean_delay(self):
            return 1.0

    flat = harness.stability_verdict(M([5, 6, 5, 6] * 10), 0, 10.0)
    assert flat.stable
    ramp = harness.stability_verdict(M(np.arange(40) * 100.0), 0, 10.0)
    assert not ramp.stable and ramp.slope == pytest.approx(1.0)
    assert ramp.threshold == pytest.approx(0.02)


def test_sweep_brackets_the_lp_limit():
    sc = small(horizon=8000, warmup=1000)
    res = harness.stability_sweep(sc, [4.0, 20.0], bisect_steps=2)
    lo, hi = res.bracket
    assert lo >= 4.0 and hi <= 20.0
    assert res.points[0][1].stable and not res.points[-1][1].stable


def test_scaled_capacities_and_region():
    sc = small(horizon=3000, warmup=500)
    w = harness.build_world(harness.scale_capacities(sc, 0.5, 2.0))
    base = harness.build_world(sc)
    assert np.allclose(w.graph.proc_capacity, 0.5 * base.graph.proc_capacity)
    assert np.allclose(w.graph.tx_capacity, 2.0 * base.graph.tx_capacity)
    region = harness.feasible_region(sc, [0.0, 1.0])
    assert region[(0.0, 0.0)][0] is False and region[(0.0, 1.0)][0] is False
    assert region[(1.0, 1.0)][0] is True
    assert harness.saving_ratio(region) == 0.0


def test_placement_sources():
    sc = harness.edge_grid()
    w = harness.build_world(sc)
    assert w.x.x.sum() == 8 and w.x.x[w.graph.cloud_index].sum() == 0
    for src in ("random-placement", "random-selection"):
        w2 = harness.build_world(sc.replace(placement={"source": src, "S": 1, "seed": 5}))
        assert w2.x.x.sum(axis=1).tolist() == [1] * 9 + [0]
    with pytest.raises(ValueError):
        harness.build_world(sc.replace(placement={"source": "magic"}))


def test_placement_labels_round_trip(tmp_path):
    sc = harness.edge_grid()
    w = harness.build_world(sc)
    labels = harness.placement_to_labels(w.x, w)
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"assignment": labels}))
    w2 = harness.build_world(sc.replace(placement={"source": "file", "path": str(path)}))
    assert w2.x == w.x


def test_small_scenarios_lp_limits():
    expect = {"small_line": 9.0, "small_diamond": 9.8246, "small_cloud": 17.0}
    for name, lam in expect.items():
        w = harness.build_world(harness.bundled(name))
        p = harness.bundled(name).traffic.get("popularity")
        assert eval_placement_lp(w.x, w.graph, w.clients, p)[0] == pytest.approx(lam, rel=1e-4)


def test_replacement_run_writes_frame_log(tmp_path):
    sc = small("small_cloud", horizon=1000, replacement={"policy": "score", "frame": 200})
    res = harness.run(sc, tmp_path)
    text = (tmp_path / "frames.csv").read_text().splitlines()
    assert text[0] == f"# scenario {sc.hash()}"
    assert text[1] == "frame,policy,delta,bytes,metric"
    assert len(text) == 2 + len(res.frames) == 2 + 5


# CLI -----------------------------------------------------------------------------

def test_cli_simulate(tmp_path, capsys):
    assert cli.main(["simulate", "--scenario", "small_line", "--horizon", "500",
                     "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("scenario ") and "admitted" in out
    harness.verify_output(tmp_path / "metrics.csv", small(horizon=500))


def test_cli_sweep(tmp_path):
    assert cli.main(["sweep", "--scenario", "small_line", "--horizon", "10000",
                     "--lambda-grid", "2,30", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[1] == "lambda,stable,slope,threshold,mean_delay,mean_backlog"
    assert [r.split(",")[:2] for r in rows[2:]] == [["2", "1"], ["30", "0"]]


def test_cli_region(tmp_path):
    assert cli.main(["region", "--scenario", "small_line", "--horizon", "2000",
                     "--alpha-grid", "0.5,1", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "region.csv").read_text().splitlines()
    assert rows[1] == "alpha_proc,alpha_tx,feasible,mean_delay" and len(rows) == 6


def test_cli_place(tmp_path):
    assert cli.main(["place", "--scenario", "small_diamond", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "placement.json").read_text())
    assert doc["status"] == "optimal" and doc["lambda"] > 0
    assert cli.main(["simulate", "--scenario", "small_diamond", "--horizon", "200",
                     "--placement", str(tmp_path / "placement.json"),
                     "--out", str(tmp_path / "run")]) == 0


def test_cli_replace_demo(tmp_path, capsys):
    assert cli.main(["replace-demo", "--scenario", "small_cloud", "--horizon", "600",
                     "--frame", "200", "--out", str(tmp_path)]) == 0
    assert "frames 3" in capsys.readouterr().out
    assert (tmp_path / "frames.csv").exists()


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.main([])
