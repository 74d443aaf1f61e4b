import csv
import io
import json

import pytest

from gpysieve.cli import SCHEMA, main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out)


def test_tuples_report(capsys):
    code, rep = run_json(capsys, "tuples", "--tuple", "0,2")
    assert code == 0
    assert rep["schema"] == SCHEMA and rep["experiment"] == "tuples"
    assert rep["result"]["admissible"] is True
    assert rep["result"]["singular_series"]["value"] == pytest.approx(1.320324, abs=1e-6)
    assert rep["config"]["k"] == 2 and rep["config"]["N"] == 100_000
    _, rep = run_json(capsys, "tuples", "--tuple", "0,2,4")
    assert rep["result"]["admissible"] is False


@pytest.mark.parametrize("argv", [
    ["tuples", "--tuple", ""],
    ["tuples", "--tuple", "0,x"],
    ["tuples", "--tuple", "0,2", "--k", "3"],
    ["lemma", "--which", "2"],
    ["lemma", "--which", "4", "--h", "0", "--tuple", "0"],
    ["optimize", "--k-max", "0"],
    ["bilinear", "--R", "100", "--R0", "4.5", "--w", "100", "--N", "10000", "--A", "10", "--B", "3"],
])
def test_usage_errors(capsys, argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"tuple": "0,2,6", "N": 5000}))
    _, rep = run_json(capsys, "tuples", "--config", str(cfg), "--N", "7000")
    assert rep["config"]["tuple"] == "0,2,6"
    assert rep["config"]["N"] == 7000  # flags win
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(SystemExit):
        main(["tuples", "--config", str(bad)])


def test_config_round_trip(tmp_path, capsys):
    _, rep = run_json(capsys, "tuples", "--tuple", "0,4,6", "--N", "1234")
    cfg = tmp_path / "echo.json"
    cfg.write_text(json.dumps(rep["config"]))
    _, again = run_json(capsys, "tuples", "--config", str(cfg))
    assert again == rep


def test_lemma1(capsys):
    code, rep = run_json(capsys, "lemma", "--which", "1", "--N", "20000")
    assert code == 0 and rep["result"]["route"] == "range_weights"
    assert "ratio" in rep["result"]


def test_lemma3_emits_rho_rows_as_csv(capsys):
    code, out = run(capsys, "lemma", "--which", "3", "--N", "10000", "--R", "100", "--R0", "4.5", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and rows[0] == {"d": "1", "value": "1"}
    assert {int(r["d"]) for r in rows} == {1, 2, 3, 6}


def test_diag_suite_and_self_test(capsys):
    code, rep = run_json(capsys, "diag", "--draws", "5")
    assert code == 0 and rep["result"]["all_passed"]
    names = {c["identity"] for c in rep["result"]["checks"]}
    assert {"optimal_value", "direct_vs_diagonal", "minimality", "G_recursion", "T1_decomposition"} <= names
    code, rep = run_json(capsys, "diag", "--draws", "5", "--perturb")
    assert code == 1
    failed = [c["identity"] for c in rep["result"]["checks"] if not c["passed"]]
    assert "optimal_value" in failed


def test_diag_resource_limit(capsys):
    assert main(["diag", "--R0", "2", "--R1", "1.25", "--R", "1e8", "--z", "1e4"]) == 3


def test_determinism(tmp_path, capsys):
    out = tmp_path / "r.json"
    main(["diag", "--draws", "4", "--seed", "3", "--out", str(out)])
    first = out.read_bytes()
    main(["diag", "--draws", "4", "--seed", "3", "--out", str(out)])
    assert out.read_bytes() == first
    assert "wall_time_s" not in json.loads(first)


def test_timing_flag(capsys):
    _, rep = run_json(capsys, "optimize", "--k-max", "2", "--timing")
    assert rep["wall_time_s"] >= 0


def test_gfun(capsys):
    code, rep = run_json(capsys, "gfun")
    assert code == 0 and rep["result"]["closer_at_larger_z"]


def test_bilinear(tmp_path, capsys):
    ledger = tmp_path / "ledger.csv"
    args = ["bilinear", "--N", "10000", "--R", "100", "--R0", "4.5", "--w", "100", "--tuple", "0,2,6"]
    code, rep = run_json(capsys, *args, "--ledger", str(ledger))
    assert code == 0 and rep["result"]["equality"]["passed"]
    assert rep["result"]["ledger"]["b_violations"] == 0
    head = ledger.read_text().splitlines()[0]
    assert head == "a,b,alpha,beta,contribution"
    code, rep = run_json(capsys, *args, "--A", "1")
    assert code == 0 and rep["result"]["ledger"]["max_a"] == 1


def test_optimize(capsys):
    _, rep = run_json(capsys, "optimize", "--thetas", "1", "--k-max", "8")
    row = [r for r in rep["result"]["rows"] if r["k"] == 7 and r["l"] == 1][0]
    assert row["factor"] == "1/20"
    _, rep = run_json(capsys, "optimize", "--thetas", "1/2", "--k-max", "12")
    assert all(r["factor_float"] <= 0 for r in rep["result"]["rows"])
    code, out = run(capsys, "optimize", "--thetas", "1", "--k-max", "3", "--format", "csv")
    assert out.splitlines()[0] == "factor,factor_float,k,l,theta"
