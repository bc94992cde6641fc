import csv
import json

import numpy as np
import pytest

from ris_airfl.cli import (ROW_COLUMNS, ResultRow, load_config, main, parse_config, run_single, summarize)
from ris_airfl.errors import InvalidInputError

FAST = {"system": {"T0": 2, "T1": 10, "T2": 5, "T3": 5}}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_defaults_and_db_conversion():
    exp = parse_config({"system": {"gamma_min_db": 26.17}})
    assert np.isclose(exp.system_config().gamma_min, 10 ** 2.617)
    assert exp.profile == "desk" and exp.seeds == [0]
    exp = parse_config({"sweep": {"axis": "gamma-min", "values": [10, 20]}})
    assert np.allclose(exp.sweep_values, [10.0, 100.0])


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"system": {"Nq": 3}},
    {"sweep": {"axis": "nmse", "values": [0.1, 0.05]}},
    {"sweep": {"axis": "nmse", "values": []}},
    {"sweep": {"axis": "power", "values": [1]}},
    {"seeds": [1, 1]},
    {"iota": 1.5},
    {"profile": "huge"},
    {"system": {"p_max": -1}},
])
def test_parse_rejects_invalid(doc):
    with pytest.raises(InvalidInputError):
        parse_config(doc)


def test_invalid_config_exit_code(tmp_path, capsys):
    assert main(["optimize", "--config", _write(tmp_path, {"bogus": 1})]) == 2
    assert "bogus" in capsys.readouterr().err


def test_optimize_is_deterministic(tmp_path):
    cfg = _write(tmp_path, {**FAST, "seeds": [3]})
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.csv"
        assert main(["optimize", "--config", cfg, "--out", str(out)]) == 0
        outs.append(out)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    rows = _read_csv(outs[0])
    assert list(rows[0]) == ROW_COLUMNS
    j0 = json.loads(outs[0].with_suffix(".json").read_text())
    j1 = json.loads(outs[1].with_suffix(".json").read_text())
    j0["config"].pop("out"), j1["config"].pop("out")
    assert j0 == j1


def test_zero_iterations_reports_initial_mse():
    exp = parse_config({"system": {"T0": 0}, "seeds": [3]})
    row = run_single(exp, 3)
    if row.status != "infeasible":
        assert row.status == "unchanged" and row.iterations == 0
        assert np.isclose(row.mse, row.initial_mse, rtol=1e-12)


def test_infeasible_instance_is_a_row_not_a_crash():
    exp = parse_config({"system": {"gamma_min_db": 90.0, "T0": 1}, "seeds": [0]})
    row = run_single(exp, 0)
    assert row.status == "infeasible" and row.message
    assert "diagnostic" in row.trace


def test_summary_means():
    rows = [ResultRow("nmse", 0.1, s, "perfect", 0.1, st, mse=m, min_sinr=2.0, min_gap=1.0, iterations=3)
            for s, st, m in [(0, "converged", 1.0), (1, "max-iterations", 3.0), (2, "infeasible", float("nan"))]]
    rows.append(ResultRow("nmse", 0.2, 0, "perfect", 0.2, "converged", mse=5.0, min_sinr=1.0, min_gap=0.5,
                          iterations=1))
    summ = summarize(rows)
    assert [s["value"] for s in summ] == [0.1, 0.2]
    assert summ[0]["runs"] == 3 and summ[0]["successes"] == 2 and summ[0]["mean_mse"] == 2.0
    assert summ[1]["mean_mse"] == 5.0


def test_sweep_writes_rows_and_summary(tmp_path):
    cfg = _write(tmp_path, {**FAST, "sweep": {"axis": "ris-elements", "values": [0, 8]}, "seeds": [3, 4]})
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--workers", "2"]) == 0
    rows = _read_csv(out)
    assert [(r["value"], r["seed"]) for r in rows] == [("0.0", "3"), ("0.0", "4"), ("8.0", "3"), ("8.0", "4")]
    summ = _read_csv(out.with_suffix(".summary.csv"))
    assert len(summ) == 2 and all(s["runs"] == "2" for s in summ)


def test_verify_passes_and_detects_injected_error(tmp_path):
    base = {"verify": {"instances": 1, "samples": 20000}}
    assert main(["verify", "--config", _write(tmp_path, base)]) == 0
    bad = {"verify": {"instances": 1, "samples": 20000, "inject_j_sign_error": True}}
    out = tmp_path / "v.csv"
    assert main(["verify", "--config", _write(tmp_path, bad, "bad.json"), "--out", str(out)]) == 1
    checks = json.loads(out.with_suffix(".json").read_text())["checks"]
    failed = {c["name"].split("[")[0] for c in checks if not c["passed"]}
    assert "error-aware-mse-mc" in failed


def test_verify_at_zero_iota(tmp_path):
    doc = {"verify": {"instances": 1, "samples": 20000, "iota": 0.0}}
    assert main(["verify", "--config", _write(tmp_path, doc)]) == 0


def test_flsim_ideal(tmp_path):
    cfg = _write(tmp_path, {"flsim": {"rounds": 3, "mode": "ideal"}, "seeds": [0, 1]})
    out = tmp_path / "fl.csv"
    assert main(["flsim", "--config", cfg, "--out", str(out)]) == 0
    rows = _read_csv(out)
    assert len(rows) == 6 and {r["mode"] for r in rows} == {"ideal"}
    assert load_config(cfg).flsim["rounds"] == 3
