import csv
import io
import json
import subprocess
import sys

import pytest

from perfect_stop.cli import EXIT_FAILED, EXIT_INVALID, EXIT_IO, EXIT_SIZE, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# config: ")
    config = json.loads(lines[0][len("# config: "):])
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    return config, rows


def test_table1_csv_echoes_config(capsys):
    code, out, _ = run(capsys, "table1", "--lambdas", "10", "--n-paths", "2000", "--seed", "7")
    assert code == 0
    config, rows = parse_csv(out)
    assert config["seed"] == 7 and config["n_paths"] == 2000 and config["lambdas"] == [10.0]
    assert list(rows[0]) == ["lambda", "E_sigma", "R_sigma", "R_u", "ci99_E_sigma", "ci99_R_sigma", "ci99_R_u"]


def test_table1_single_path_reports_unbounded_ci(capsys):
    code, out, _ = run(capsys, "table1", "--lambdas", "1", "--n-paths", "1", "--format", "json")
    assert code == 0
    row = json.loads(out)["rows"][0]
    assert row["ci99_E_sigma"] is None
    code, out, _ = run(capsys, "table1", "--lambdas", "1", "--n-paths", "1")
    assert parse_csv(out)[1][0]["ci99_E_sigma"] == "inf"


def test_table2_p_half_matches_table1(capsys):
    _, out1, _ = run(capsys, "table1", "--lambdas", "10", "--n-paths", "3000", "--format", "json")
    _, out2, _ = run(capsys, "table2", "--ps", "0.5", "--n-paths", "3000", "--format", "json")
    r1, r2 = json.loads(out1)["rows"][0], json.loads(out2)["rows"][0]
    assert (r1["E_sigma"], r1["R_sigma"], r1["R_u"]) == (r2["E_sigma"], r2["R_sigma"], r2["R_half"])


def test_tables_are_idempotent(tmp_path, capsys):
    f = tmp_path / "t2.csv"
    contents = []
    for _ in range(2):
        assert run(capsys, "table2", "--ps", "0.3", "0.7", "--n-paths", "1000", "--out", str(f))[0] == 0
        contents.append(f.read_bytes())
    assert contents[0] == contents[1]


def test_paper_rounding(capsys):
    _, out, _ = run(capsys, "table3", "--paper-rounding")
    _, rows = parse_csv(out)
    assert [(r["q"], r["z_q"], r["delta"]) for r in rows][:2] == [("1.10", "1.03", "0.70"), ("2.00", "1.12", "0.74")]
    _, out, _ = run(capsys, "table3", "--format", "json", "--paper-rounding")
    assert json.loads(out)["rows"][1]["z_q"] == pytest.approx(1.1228, abs=1e-4)


def test_table3_errors(capsys):
    code, _, err = run(capsys, "table3", "--qs", "1")
    assert code == EXIT_INVALID and "q must exceed 1" in err
    code, out, _ = run(capsys, "table3", "--qs", "1.0001", "--format", "json")
    assert code == 0 and json.loads(out)["rows"][0]["z_q"] > 1


def test_empty_list_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["table2", "--ps"])
    assert exc.value.code == EXIT_USAGE


def test_verify(capsys):
    code, out, _ = run(capsys, "verify", "--count", "20", "--max-depth", "3", "--seed", "2", "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert doc["summary"]["n_passed"] == 20 and doc["config"]["seed"] == 2
    _, again, _ = run(capsys, "verify", "--count", "20", "--max-depth", "3", "--seed", "2", "--format", "json")
    assert again == out


def test_verify_depth_cap(capsys):
    code, _, err = run(capsys, "verify", "--max-depth", "6")
    assert code == EXIT_SIZE and "size error" in err


def test_apply(tmp_path, capsys):
    f = tmp_path / "s.csv"
    f.write_text("t,price\n0,1\n0.5,0.5\n1,0.4\n")
    code, out, _ = run(capsys, "apply", str(f), "--forecast", '{"kind": "lipschitz", "L2": 1}')
    assert code == 0
    doc = json.loads(out)
    row = doc["rows"][0]
    assert row["stop_time"] == pytest.approx(0.5, abs=1e-12)
    assert row["estimated_regret"] == pytest.approx(0.5)
    assert row["realized_regret"] == pytest.approx(0.5)
    assert doc["config"]["forecast"]["T"] == 1.0


def test_apply_rising_series_and_forecast_file(tmp_path, capsys):
    f = tmp_path / "up.csv"
    f.write_text("t,price\n0,1\n1,2\n2,3\n")
    spec = tmp_path / "f.json"
    spec.write_text('{"kind": "brownian_quantile", "sigma": 1, "delta": 0.9}')
    code, out, _ = run(capsys, "apply", str(f), "--forecast", f"@{spec}")
    assert code == 0 and json.loads(out)["rows"][0]["stop_time"] == 2.0


def test_apply_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,price\n0,1\n0.5,oops\n")
    code, _, err = run(capsys, "apply", str(bad), "--forecast", '{"kind": "lipschitz", "L2": 1}')
    assert code == EXIT_INVALID and "line 3" in err
    good = tmp_path / "good.csv"
    good.write_text("t,price\n0,1\n1,0\n")
    code, _, err = run(capsys, "apply", str(good), "--forecast", "{not json")
    assert code == EXIT_INVALID
    code, _, _ = run(capsys, "apply", str(tmp_path / "missing.csv"), "--forecast", '{"kind": "lipschitz", "L2": 1}')
    assert code == EXIT_IO


def test_unwritable_output(tmp_path, capsys):
    target = tmp_path / "no" / "such" / "dir.csv"
    code, _, err = run(capsys, "table3", "--out", str(target))
    assert code == EXIT_IO and str(target) in err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "perfect_stop.cli", "table3", "--qs", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "# config:" in proc.stdout


def test_verify_failure_exit_code(monkeypatch, capsys):
    from perfect_stop import cli
    from perfect_stop.oracle import ScenarioTree, verify_perfection

    tree = ScenarioTree({"price": 0, "children": [{"price": -1.5}, {"price": 1}]}, [0, 1], [1, 0])
    monkeypatch.setattr(cli, "verify_random_trees", lambda *a, **k: [(tree, verify_perfection(tree))])
    code, out, _ = run(capsys, "verify", "--count", "1", "--format", "json")
    assert code == EXIT_FAILED
    assert json.loads(out)["summary"]["failures"][0]["report"]["passed"] is False
