"""End-to-end tests of the config-driven runner."""

import json
import math

import numpy as np
import pytest

from znlab import cli
from znlab.gauge import SCAN_COLUMNS


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run_main(tmp_path, data, extra=()):
    path = write_config(tmp_path, data)
    out = str(tmp_path / "out")
    code = cli.main(["run", path, "--out", out, *extra])
    report_path = tmp_path / "out" / "report.json"
    report = json.loads(report_path.read_text()) if report_path.exists() \
        else None
    return code, report, tmp_path / "out"


# -- config validation ------------------------------------------------------


def test_missing_modulus_names_field(tmp_path, capsys):
    code, report, _ = run_main(tmp_path, {"kind": "kw-duality"})
    assert code == 2
    assert report is None
    assert "missing field: N" in capsys.readouterr().err


def test_unknown_kind_rejected(tmp_path, capsys):
    code, _, _ = run_main(tmp_path, {"kind": "mystery", "N": 2})
    assert code == 2
    assert "kind" in capsys.readouterr().err


def test_invalid_json_rejected(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    code = cli.main(["run", str(path), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "not valid JSON" in capsys.readouterr().err


def test_non_integer_size_names_path(tmp_path, capsys):
    cfgd = {"kind": "gauge-prcm-marginals", "N": 3,
            "geometry": {"d": 2, "L": "two", "P": 1}}
    code, _, _ = run_main(tmp_path, cfgd)
    assert code == 2
    assert "geometry.L" in capsys.readouterr().err


def test_unknown_cell_reference_names_entry(tmp_path, capsys):
    cfgd = {
        "kind": "oracle-vs-classical", "N": 2, "seed": 1,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
        "background": {
            "wilson": [{"coords": [5, 0], "axes": [0]}],
        },
    }
    code, _, _ = run_main(tmp_path, cfgd)
    assert code == 2
    err = capsys.readouterr().err
    assert "background.wilson[0]" in err


def test_scan_requires_scan_block(tmp_path, capsys):
    code, _, _ = run_main(tmp_path, {"kind": "sw-scan", "N": 3})
    assert code == 2
    assert "scan" in capsys.readouterr().err


# -- constants subcommand ---------------------------------------------------


def test_constants_subcommand(capsys):
    code = cli.main(["constants", "--N", "3", "--P", "1"])
    assert code == 0
    data = json.loads(capsys.readouterr().out)
    root = math.sqrt(3.0)
    assert abs(data["p_sd"] - root / (1.0 + root)) < 1e-15
    assert abs(data["beta_sd"] - math.log(1.0 + root)) < 1e-15
    assert abs(data["nonlocal_move_prob"] - (1.0 - 3.0 ** -6)) < 1e-15


def test_constants_rejects_bad_modulus(capsys):
    code = cli.main(["constants", "--N", "1", "--P", "0"])
    assert code == 2
    assert capsys.readouterr().err


# -- oracle vs classical ----------------------------------------------------


def test_oracle_example_passes(tmp_path):
    cfgd = {
        "kind": "oracle-vs-classical", "N": 2, "seed": 3,
        "geometry": {"d": 2, "L": 2, "M": 2, "P": 1},
        "options": {"draws": 2},
    }
    code, report, _ = run_main(tmp_path, cfgd)
    assert code == 0
    assert report["passed"] is True
    assert report["results"]["worst_residual"] < 1e-9
    assert report["version"]
    assert report["config"]["geometry"]["M"] == 2


def test_oracle_with_insertions(tmp_path):
    loop = [{"coords": [x, 0], "axes": [0]} for x in range(2)]
    dual_loop = [{"coords": [0, y], "axes": [1]} for y in range(2)]
    cfgd = {
        "kind": "oracle-vs-classical", "N": 3, "seed": 5,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
        "background": {"wilson": loop, "thooft": dual_loop},
    }
    code, report, _ = run_main(tmp_path, cfgd)
    assert code == 0
    labels = {row["background"] for row in report["results"]["cases"]}
    assert labels == {"none", "config"}
    assert report["results"]["worst_residual"] < 1e-9


def test_oracle_accepts_explicit_couplings(tmp_path):
    cfgd = {
        "kind": "oracle-vs-classical", "N": 2, "seed": 0,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
        "couplings": {"beta": 0.8, "J": 0.5, "K": 1.1},
    }
    code, report, _ = run_main(tmp_path, cfgd)
    assert code == 0
    assert report["results"]["worst_residual"] < 1e-9


# -- defect identities ------------------------------------------------------


def test_defect_identities_pass(tmp_path):
    cfgd = {
        "kind": "defect-identities", "N": 2, "seed": 7,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
    }
    code, report, _ = run_main(tmp_path, cfgd)
    assert code == 0
    cases = report["results"]["cases"]
    assert [c["background"] for c in cases] == ["zero"]
    for c in cases:
        assert c["closed_defect_residual"] < 1e-9
        assert c["sector_reconstruction_residual"] < 1e-9


def test_defect_identities_with_background(tmp_path):
    cfgd = {
        "kind": "defect-identities", "N": 2, "seed": 2,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
        "background": {
            "electric": [{"coords": [x, 0, 0], "axes": [0]}
                         for x in range(2)],
        },
    }
    code, report, _ = run_main(tmp_path, cfgd)
    assert code == 0
    labels = [c["background"] for c in report["results"]["cases"]]
    assert labels == ["zero", "config"]


# -- kw duality -------------------------------------------------------------


def test_kw_duality_random_tables(tmp_path):
    cfgd = {
        "kind": "kw-duality", "N": 3, "seed": 9,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
    }
    code, report, _ = run_main(tmp_path, cfgd)
    assert code == 0
    raw = report["results"]["raw"]
    assert raw["residual"] < 1e-9
    assert raw["normalized_residual"] < 1e-9
    assert "trotter" not in report["results"]


def test_kw_duality_self_dual_locus(tmp_path):
    beta_sd = math.log(1.0 + math.sqrt(2.0))
    cfgd = {
        "kind": "kw-duality", "N": 2, "seed": 0,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
        "couplings": {"beta": beta_sd, "K": 1.0, "J": 0.0},
    }
    code, report, _ = run_main(tmp_path, cfgd)
    assert code == 0
    tro = report["results"]["trotter"]
    assert tro["residual"] < 1e-9
    assert tro["weight_residual"] < 1e-12
    assert abs(tro["factor"] - tro["factor_expected"]) \
        < 1e-12 * tro["factor_expected"]


# -- low activity -----------------------------------------------------------


def test_low_activity_report(tmp_path):
    cfgd = {
        "kind": "low-activity-report", "N": 2, "seed": 0,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
        "couplings": {"beta": 4.0, "J": 1.0, "K": 1.0},
        "options": {"max_size": 3, "l_values": [1, 2],
                    "census": {"max_size": 3, "roots": [0]}},
    }
    code, report, outdir = run_main(tmp_path, cfgd)
    assert code == 0
    res = report["results"]
    assert res["regions"]["magnetic"]["ok"]
    assert res["regions"]["electric"]["ok"]
    assert res["tails"]["magnetic"]["tail_ok"]
    census = (outdir / "census_magnetic.csv").read_text()
    assert census.splitlines()[0].startswith("species")


# -- gauge marginals --------------------------------------------------------


def test_gauge_marginals_kind(tmp_path):
    cfgd = {
        "kind": "gauge-prcm-marginals", "N": 3, "seed": 0,
        "geometry": {"d": 2, "L": 2, "P": 1},
        "options": {"p_values": [0.25, 0.5]},
    }
    code, report, outdir = run_main(tmp_path, cfgd)
    assert code == 0
    pts = report["results"]["points"]
    assert [row["p"] for row in pts] == [0.25, 0.5]
    for row in pts:
        assert row["ok"] is True
        assert row["gauge_variance"] < 1e-20
    table = (outdir / "marginals.csv").read_text()
    assert table.startswith("p,gauge_constant")
    assert len(table.strip().splitlines()) == 3


# -- sw scan ----------------------------------------------------------------


def test_sw_scan_writes_table(tmp_path):
    cfgd = {
        "kind": "sw-scan", "N": 3, "seed": 11,
        "geometry": {"P": 1},
        "scan": {"L_values": [2], "p_values": [0.5], "sweeps": 30,
                 "chains": 2, "thin": 5, "burn": 5},
    }
    code, report, outdir = run_main(tmp_path, cfgd)
    assert code == 0
    rows = report["results"]["rows"]
    assert len(rows) == 1
    assert rows[0]["L"] == 2 and rows[0]["p"] == 0.5
    text = (outdir / "scan.csv").read_text()
    lines = text.strip().splitlines()
    assert lines[0] == ",".join(SCAN_COLUMNS)
    assert len(lines) == 2


# -- determinism and plumbing ----------------------------------------------


def test_identical_runs_bitwise_identical(tmp_path):
    cfgd = {
        "kind": "kw-duality", "N": 2, "seed": 4,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
    }
    path = write_config(tmp_path, cfgd)
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert cli.main(["run", path, "--out", out]) == 0
        outs.append((tmp_path / name / "report.json").read_bytes())
    assert outs[0] == outs[1]


def test_seed_flag_overrides_config(tmp_path):
    cfgd = {
        "kind": "kw-duality", "N": 2, "seed": 4,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
    }
    code, report, _ = run_main(tmp_path, cfgd, extra=("--seed", "12"))
    assert code == 0
    assert report["config"]["seed"] == 12


def test_threads_env_default(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli._default_threads() == 3
    monkeypatch.setenv(cli.THREADS_ENV, "junk")
    assert cli._default_threads() == 1
    monkeypatch.delenv(cli.THREADS_ENV)
    assert cli._default_threads() == 1


def test_threads_flag_recorded_and_result_unchanged(tmp_path):
    cfgd = {
        "kind": "defect-identities", "N": 2, "seed": 1,
        "geometry": {"d": 2, "L": 2, "M": 1, "P": 1},
    }
    path = write_config(tmp_path, cfgd)
    reports = []
    for name, k in (("t1", "1"), ("t2", "2")):
        out = str(tmp_path / name)
        assert cli.main(["run", path, "--out", out, "--threads", k]) == 0
        reports.append(json.loads((tmp_path / name / "report.json")
                                  .read_text()))
    assert reports[0]["config"]["threads"] == 1
    assert reports[1]["config"]["threads"] == 2
    assert reports[0]["results"] == reports[1]["results"]


def test_run_api_direct(tmp_path):
    cfgd = {
        "kind": "gauge-prcm-marginals", "N": 2, "seed": 0,
        "geometry": {"d": 2, "L": 2, "P": 1},
        "options": {"p_values": [0.5]},
    }
    code, report = cli.run(cfgd, str(tmp_path / "direct"))
    assert code == 0
    assert report["kind"] == "gauge-prcm-marginals"
    assert report["passed"] is True
