import csv
import json
import math

import numpy as np
import pytest

import main
from cli import selftest
from core.specfun import log_gamma


def parse_csv(text):
    comments = [line for line in text.splitlines() if line.startswith("#")]
    body = [line for line in text.splitlines() if line and not line.startswith("#")]
    return comments, list(csv.DictReader(body))


def error_json(text):
    return json.loads([line for line in text.splitlines() if line.startswith("{")][-1])


def test_cf_single_point(capsys):
    assert main.main(["cf", "--measure", "beta:1,1", "--t", "1", "--x", "1"]) == 0
    comments, rows = parse_csv(capsys.readouterr().out)
    assert comments[0].startswith("# quantity: characteristic function (X)")
    assert any(line.startswith("# identity:") for line in comments)
    expected = complex(np.exp(log_gamma(1.0 + 1j) - log_gamma(1.0 + 1j * math.exp(-1.0))))
    assert len(rows) == 1
    assert float(rows[0]["re"]) == pytest.approx(expected.real, abs=1e-8)
    assert float(rows[0]["im"]) == pytest.approx(expected.imag, abs=1e-8)


def test_cf_grid(capsys):
    assert main.main(["cf", "--measure", "beta:1,1", "--t", "0.5", "--x-min", "-1", "--x-max", "1",
                      "--x-step", "0.5", "--method", "bs-closed"]) == 0
    _, rows = parse_csv(capsys.readouterr().out)
    assert [float(r["x"]) for r in rows] == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert float(rows[2]["re"]) == pytest.approx(1.0, abs=1e-14)


def test_single_block_has_no_events(capsys):
    assert main.main(["simulate", "--n", "1", "--measure", "beta:1,1", "--events"]) == 0
    comments, rows = parse_csv(capsys.readouterr().out)
    assert rows == []
    assert "# initial_state: 1" in comments


def test_simulation_is_reproducible(capsys):
    argv = ["simulate", "--n", "50", "--measure", "beta:1,1", "--times", "0.5", "1", "--replicates", "40", "--seed"]
    assert main.main(argv + ["7", "--batch-size", "10"]) == 0
    first = capsys.readouterr().out
    assert main.main(argv + ["7", "--batch-size", "40", "--threads", "3"]) == 0
    second = capsys.readouterr().out
    assert main.main(argv + ["7", "--batch-size", "3", "--threads", "2"]) == 0
    third = capsys.readouterr().out
    assert main.main(argv + ["8", "--batch-size", "10"]) == 0
    other = capsys.readouterr().out
    assert first == second == third
    assert first != other
    _, rows = parse_csv(first)
    assert len(rows) == 80


def test_duality(capsys):
    assert main.main(["duality", "--n", "10", "--m", "10", "--t", "0.5", "--measure", "beta:1,1",
                      "--cap", "2000"]) == 0
    _, rows = parse_csv(capsys.readouterr().out)
    row = rows[0]
    assert float(row["gap"]) <= float(row["truncation_bound"]) + 1e-8
    assert float(row["lhs_lower"]) - 1e-8 <= float(row["rhs"]) <= float(row["lhs_upper"]) + 1e-8


def test_rates_to_file(tmp_path, capsys):
    out = tmp_path / "rates.csv"
    assert main.main(["rates", "--measure", "beta:1,1", "--k-max", "4", "--out", str(out)]) == 0
    assert capsys.readouterr().out == ""
    _, rows = parse_csv(out.read_text(encoding="utf-8"))
    assert [(int(r["k"]), int(r["j"])) for r in rows] == [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)]
    assert all(r["method"] == "closed" for r in rows)
    assert float(rows[0]["rate"]) == pytest.approx(1.0, abs=1e-14)
    assert all(float(r["rel_gap"]) <= 1e-10 for r in rows)


def test_fixation_rates(capsys):
    assert main.main(["rates", "--kind", "fixation", "--measure", "lebesgue:1", "--k-max", "2", "--j-max", "3",
                      "--no-compare"]) == 0
    _, rows = parse_csv(capsys.readouterr().out)
    assert [(int(r["k"]), int(r["j"])) for r in rows] == [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (2, 5)]
    assert float(rows[3]["rate"]) == pytest.approx(1.0, abs=1e-14)
    assert rows[0]["rel_gap"] == ""


def test_cdi_verdict(capsys):
    assert main.main(["cdi", "--measure", "beta:0.5,1", "--k-max", "10000"]) == 0
    comments, rows = parse_csv(capsys.readouterr().out)
    assert "# verdict_hint: converges-evidence" in comments
    assert len(rows) == 9999


def test_run_config_file(tmp_path, capsys):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "subcommand": "rates",
        "measure": {"kind": "beta", "a": 2.0, "b": 2.0},
        "options": {"command": "rates", "k_max": 3, "compare": False},
    }), encoding="utf-8")
    assert main.main(["--config", str(path)]) == 0
    _, rows = parse_csv(capsys.readouterr().out)
    assert len(rows) == 3


@pytest.mark.parametrize("argv, error", [
    (["rates", "--measure", "beta:-1,1"], "DataValidationError"),
    (["rates", "--measure", "@no-such-file.json"], "MeasureNotFoundError"),
    (["rates", "--k-max", "4"], "DataValidationError"),
    (["duality", "--n", "10", "--m", "10", "--t", "0.5", "--measure", "beta:1,1", "--cap", "10"],
     "DataValidationError"),
    (["cf", "--measure", "beta:2,2", "--b", "0", "--kind", "stationary"], "StationarityUnavailableError"),
])
def test_input_errors(capsys, argv, error):
    assert main.main(argv) == 1
    payload = error_json(capsys.readouterr().err)
    assert payload["error"] == error
    assert payload["detail"]


def test_numerical_failure_exit_code(capsys):
    argv = ["duality", "--n", "12", "--m", "10", "--t", "2", "--measure", "beta:1,1", "--cap", "13",
            "--duality-tol", "1e-6"]
    assert main.main(argv) == 2
    assert error_json(capsys.readouterr().err)["error"] == "CapTooSmallError"


def test_missing_subcommand(capsys):
    assert main.main([]) == 1
    assert "usage" in capsys.readouterr().err


@pytest.mark.slow
def test_quick_selftest_passes():
    results = selftest.run_checks("quick", 0)
    assert [r.name for r in results if not r.passed] == []
