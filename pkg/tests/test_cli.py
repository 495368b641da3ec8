import csv
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from groupoidlab.cli import (EXIT_ABORTED, EXIT_FAILED, EXIT_OK, cycle_header, demo_config, dump_cycle,
                             exit_status, main, run)
from groupoidlab.config import load_config, parse_config
from groupoidlab.errors import ConfigError, OutOfNeighborhood, TransversalityFailure
from groupoidlab.report import CheckResult, SuiteReport
from groupoidlab.suites import SUITES

from conftest import GRAPH_M1


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_config_defaults_and_ordering():
    cfg = parse_config({"family": "standard", "suites": ["critical", "fields"]})
    assert cfg.suites == ["fields", "critical"]
    assert cfg.samples == 20 and cfg.m == 1 and cfg.n_cycle_sizes == [2, 3, 4, 5]
    assert cfg.numeric_tolerances().newton_tol == 1e-12


@pytest.mark.parametrize("bad", [
    {"family": "standard", "colour": 1},
    {"family": "standard", "tolerances": {"fd_stp": 1e-4}},
    {"family": "standard", "suites": ["nope"]},
    {"family": "standard", "n_cycle_sizes": [1]},
    {"family": "standard", "seed": -1},
    {"family_params": []},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_minimal_run_passes():
    cfg = parse_config({"family": "standard", "samples": 3, "suites": ["fields", "groupoid", "calabi"],
                        "n_cycle_sizes": [2], "box_radius": 2.0})
    reports, status = run(cfg)
    assert status == EXIT_OK
    assert [r.suite for r in reports] == ["fields", "groupoid", "calabi"]
    for r in reports:
        assert r.meta["config"]["family"] == "standard"
        assert set(r.meta["versions"]) >= {"groupoidlab", "numpy", "scipy", "python"}


def test_reports_are_deterministic():
    cfg = parse_config({"family": "graph", "family_params": GRAPH_M1, "samples": 3,
                        "suites": ["oneform", "groupoid"], "seed": 7})
    first = [r.to_dict() for r in run(cfg)[0]]
    second = [r.to_dict() for r in run(cfg)[0]]
    for d in first + second:
        d["meta"].pop("wall_time_s")
    assert first == second


def test_degenerate_pair():
    cfg = parse_config({"family": "graph", "family_params": [0.5, 0.0, 0.5, 0.0], "samples": 2})
    with pytest.raises(TransversalityFailure):
        run(cfg)


def test_bad_family_params_become_config_errors():
    with pytest.raises(ConfigError):
        run(parse_config({"family": "graph", "family_params": [1.0], "samples": 2}))


outcome = st.sampled_from(["pass", "fail", "abort"])


@given(st.lists(outcome, min_size=len(SUITES), max_size=len(SUITES)))
def test_exit_status_property(outcomes):
    def make(kind):
        def suite(ctx):
            if kind == "abort":
                raise OutOfNeighborhood("left the basin")
            return [CheckResult("c", 0.0 if kind == "pass" else 1.0, 0.5)]
        return suite

    funcs = dict(zip(SUITES, map(make, outcomes)))
    cfg = parse_config({"family": "standard", "samples": 1})
    reports, status = run(cfg, funcs)
    expected = EXIT_ABORTED if "abort" in outcomes else (EXIT_FAILED if "fail" in outcomes else EXIT_OK)
    assert status == expected
    assert [r.aborted is not None for r in reports] == [o == "abort" for o in outcomes]


def test_exit_status_of_nan_check():
    assert exit_status([SuiteReport("x", [CheckResult("c", float("nan"), 1.0)])]) == EXIT_FAILED


def test_dump_cycle_standard(tmp_path):
    cfg = parse_config({"family": "standard", "box_radius": 2.0})
    xs = np.array([[0.1, 0.2], [0.3, -0.1], [-0.2, 0.05]])
    out = tmp_path / "cycle.csv"
    report = dump_cycle(cfg, xs, out)
    rows = list(csv.reader(out.open()))
    assert rows[0] == cycle_header(1) == ["k", "x_1", "x_2", "xi_1", "xi_2", "res_source", "res_target"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    nxt, prev = np.roll(xs, -1, axis=0), np.roll(xs, 1, axis=0)
    expected = np.stack([nxt[:, 1] - xs[:, 1], prev[:, 0] - xs[:, 0]], axis=1)
    got = np.array([[float(v) for v in r[3:5]] for r in rows[1:]])
    assert np.max(np.abs(got - expected)) <= 1e-9
    assert report.passed(1e-6)


def test_dump_cycle_rejects_bad_points(tmp_path):
    cfg = parse_config({"family": "standard"})
    with pytest.raises(ConfigError):
        dump_cycle(cfg, [[0.0, 0.0]], tmp_path / "x.csv")


def test_main_run_and_report(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"family": "standard", "samples": 2, "box_radius": 2.0,
                                           "n_cycle_sizes": [2]})
    out = tmp_path / "r.json"
    assert main(["run", "--config", cfg, "--report", str(out), "--suite", "calabi"]) == EXIT_OK
    data = json.loads(out.read_text())
    assert [d["suite"] for d in data] == ["calabi"] and data[0]["pass"]
    assert "[PASS] calabi" in capsys.readouterr().err


def test_main_stdout_and_errors(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"family": "standard", "samples": 2, "suites": ["fields"]})
    assert main(["run", "--config", cfg]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)[0]["suite"] == "fields"
    bad = write_json(tmp_path / "bad.json", {"family": "nosuch"})
    assert main(["run", "--config", bad]) == EXIT_FAILED
    degenerate = write_json(tmp_path / "d.json", {"family": "graph", "family_params": [0.5, 0.0, 0.5, 0.0]})
    assert main(["run", "--config", degenerate]) == EXIT_FAILED
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_FAILED


def test_main_demo(tmp_path):
    out = tmp_path / "demo.json"
    assert main(["demo", "graph", "--m", "1", "--samples", "2", "--report", str(out)]) == EXIT_OK
    assert [d["suite"] for d in json.loads(out.read_text())] == list(SUITES)
    assert demo_config("mixed", 2).family_params == [0.05, 0.1, 0.03]


def test_main_dump_cycle(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"family": "graph", "family_params": GRAPH_M1})
    pts = write_json(tmp_path / "p.json", [[0.1, 0.1], [0.1, 0.1]])
    out = tmp_path / "cycle.csv"
    assert main(["dump-cycle", "--config", cfg, "--points", pts, "--out", str(out)]) == EXIT_OK
    rows = list(csv.reader(out.open()))
    assert len(rows) == 3 and all(abs(float(v)) <= 1e-9 for r in rows[1:] for v in r[3:5])
    assert main(["dump-cycle", "--config", cfg, "--points", str(tmp_path / "none.json"),
                 "--out", str(out)]) == EXIT_FAILED


@pytest.mark.slow
def test_standard_all_suites_hundred_samples():
    reports, status = run(parse_config({"family": "standard", "samples": 100}))
    assert status == EXIT_OK
    assert [r.suite for r in reports] == list(SUITES)


def test_dump_cycle_graph_random_points(tmp_path):
    cfg = parse_config({"family": "graph", "family_params": GRAPH_M1, "seed": 11})
    rng = np.random.default_rng(11)
    xs = rng.uniform(-0.3, 0.3, 2) + rng.uniform(-0.05, 0.05, (4, 2))
    out = tmp_path / "cycle.csv"
    dump_cycle(cfg, xs, out)
    rows = list(csv.reader(out.open()))[1:]
    assert len(rows) == 4
    tol = cfg.numeric_tolerances().check_tol
    assert all(float(r[-1]) <= tol and float(r[-2]) <= tol for r in rows)
