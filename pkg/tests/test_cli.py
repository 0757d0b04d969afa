import json

import numpy as np
import pytest

from dualprice import config
from dualprice.cli import EXIT_INPUT, EXIT_OK, main
from dualprice.dp import from_csv

SMALL = ["--grid-min", "-8", "--grid-max", "8"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    d = tmp_path_factory.mktemp("solve")
    assert main(["solve", "--out", str(d), *SMALL]) == EXIT_OK
    return d


def test_solve_writes_artifacts(solved, e1):
    summary = json.loads((solved / "summary.json").read_text())
    assert summary["thresholds"][0]["I_s_star"] is not None
    sol = from_csv((solved / "policy.csv").read_text(), e1)
    assert sol.V.shape[1] == 321 and sol.d_s.shape == (2, 321)


def test_verify_from_solution(solved, capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--solution", str(solved / "policy.csv"),
                       "--out", str(tmp_path))
    assert code == EXIT_OK
    assert " 0 failed" in out
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["summary"]["fail"] == 0


def test_garbage_solution_is_input_error(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,policy\n1,2\n")
    code, _, err = run(capsys, "verify", "--solution", str(bad), "--out", str(tmp_path))
    assert code == EXIT_INPUT and "cannot read solution" in err


def test_invalid_spec_is_input_error(capsys, tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text(config.bundled("example1").replace("c_h = 2.0", "c_h = 20.0"))
    code, _, err = run(capsys, "solve", "--spec", str(p), "--out", str(tmp_path), *SMALL)
    assert code == EXIT_INPUT and "invalid" in err


def test_unknown_spec_and_bad_nodes(capsys, tmp_path):
    assert run(capsys, "solve", "--spec", "nope", "--out", str(tmp_path))[0] == EXIT_INPUT
    assert run(capsys, "solve", "--nodes", "0", "--out", str(tmp_path))[0] == EXIT_INPUT


def test_simulate_trace_reproducible(solved, capsys, tmp_path):
    traces = []
    for k in range(2):
        d = tmp_path / str(k)
        code, _, _ = run(capsys, "simulate", "--solution", str(solved / "policy.csv"), "--I0", "1",
                         "--paths", "1", "--seed", "7", "--trace", "--out", str(d))
        assert code == EXIT_OK
        traces.append((d / "trace.csv").read_text())
    assert traces[0] == traces[1]
    body = [ln for ln in traces[0].splitlines() if not ln.startswith("#")]
    assert body[0] == "path,t,I,d_s,d_l,D_s,D_l,cash"
    assert len(body) == 1 + 3


def test_simulate_outside_grid_warns(solved, capsys, caplog, tmp_path):
    code, _, _ = run(capsys, "simulate", "--solution", str(solved / "policy.csv"), "--I0", "20",
                       "--paths", "10", "--out", str(tmp_path))
    assert code == EXIT_OK and "grid escape" in caplog.text
    stats = json.loads((tmp_path / "simstats.json").read_text())
    assert stats["grid_escapes"]


def test_figure2_csv(capsys, tmp_path):
    code, out, _ = run(capsys, "figure2", "--out", str(tmp_path), *SMALL)
    assert code == EXIT_OK and "d*_l,1(-1.3)" in out
    rows = [ln for ln in (tmp_path / "figure2.csv").read_text().splitlines() if not ln.startswith("#")]
    assert rows[0] == "I,d_s_star,d_l_star"
    I = np.array([float(r.split(",")[0]) for r in rows[1:]])
    assert I[0] == -4.0 and I[-1] == 6.0 and len(I) == 201


def test_figure2_needs_covering_grid(capsys, tmp_path):
    assert run(capsys, "figure2", "--grid-min", "-2", "--grid-max", "2",
               "--out", str(tmp_path))[0] == EXIT_INPUT


def test_threshold_stability_under_grid_step(solved, capsys, tmp_path):
    coarse = json.loads((solved / "summary.json").read_text())["thresholds"]
    code, _, _ = run(capsys, "thresholds", "--grid-step", "0.025", "--out", str(tmp_path), *SMALL)
    assert code == EXIT_OK
    fine = json.loads((tmp_path / "thresholds.json").read_text())["thresholds"]
    for a, b in zip(coarse, fine):
        for key in ("I_s_star", "I_l_star"):
            if a[key] is not None:
                assert abs(a[key] - b[key]) < 0.05


def test_unified_rejects_mismatched_markets(capsys, tmp_path):
    code, _, err = run(capsys, "unified", "--out", str(tmp_path), *SMALL)
    assert code == EXIT_INPUT and "shared pricing" in err
