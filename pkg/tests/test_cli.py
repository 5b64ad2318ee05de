import json
import math

import pytest

import queuedecay.validate
from queuedecay.cli import main
from queuedecay.ratecalc import PriorityDecay, y_star
from queuedecay.validate import run_criterion

MM1 = {"arrival": {"type": "exponential", "rate": 0.5},
       "service": {"type": "exponential", "rate": 1.0}}
SPLIT = {"arrival": {"type": "exponential", "rate": 1.0},
         "split": {"p": 0.5,
                   "class1": {"type": "uniform", "lo": 0.0, "hi": 0.5},
                   "class2": {"type": "deterministic", "value": 1.0}}}
UNSTABLE = {"arrival": {"type": "exponential", "rate": 2.0},
            "service": {"type": "exponential", "rate": 1.0}}
NO_DELAYS = {"arrival": {"type": "deterministic", "value": 2.0},
             "service": {"type": "deterministic", "value": 1.0}}


@pytest.fixture
def model_file(tmp_path):
    def write(doc, name="model.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)
    return write


def _run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    capsys.readouterr()
    assert main(["rates", "--help"]) == 0
    capsys.readouterr()


def test_unknown_flag_is_config_error(capsys):
    assert main(["rates", "--no-such-flag"]) == 1
    capsys.readouterr()


def test_missing_and_malformed_model_files(capsys, tmp_path):
    assert main(["rates", "--model", str(tmp_path / "absent.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["rates", "--model", str(bad)]) == 1
    capsys.readouterr()


def test_exit_codes_for_model_classes(capsys, model_file):
    assert main(["rates", "--model", model_file(MM1)]) == 0
    capsys.readouterr()
    assert main(["rates", "--model", model_file(UNSTABLE)]) == 2
    capsys.readouterr()
    assert main(["rates", "--model", model_file(NO_DELAYS)]) == 1
    capsys.readouterr()


def test_rates_json_document(capsys, model_file):
    code, out = _run(capsys, ["rates", "--model", model_file(MM1)])
    assert code == 0
    doc = json.loads(out)
    assert list(doc) == ["model", "report"]
    report = doc["report"]
    assert list(report) == ["gamma_w", "gamma_p", "gamma_w2", "gamma_v",
                            "regime", "s_opt", "a", "K", "rho", "q",
                            "x_b", "case"]
    assert report["gamma_w"] == pytest.approx(0.5, abs=1e-12)
    assert report["rho"] == pytest.approx(0.5, abs=1e-12)
    assert report["gamma_w2"] is None  # no class split in this model
    assert doc["model"] == MM1


def test_rates_ystar_fields(capsys, model_file):
    code, out = _run(capsys, ["rates", "--model", model_file(MM1),
                              "--ystar"])
    assert code == 0
    doc = json.loads(out)
    assert "y_star" in doc and "p_exceed" in doc
    from queuedecay.ratecalc import model_from_json
    crit = y_star(model_from_json(MM1))
    assert doc["y_star"] == pytest.approx(crit.value, rel=1e-12)
    assert doc["p_exceed"] == pytest.approx(crit.tail_prob, rel=1e-12)
    assert 0.0 < doc["p_exceed"] <= 1.0


def test_rates_csv_output(capsys, model_file):
    code, out = _run(capsys, ["rates", "--model", model_file(MM1),
                              "--output", "csv"])
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "key,value"
    table = dict(line.split(",", 1) for line in lines[1:])
    assert float(table["gamma_w"]) == pytest.approx(0.5, abs=1e-12)
    assert table["gamma_w2"] == ""  # None renders as an empty cell
    assert table["case"] and "'" not in table["case"]


def test_rates_byte_deterministic(capsys, model_file):
    path = model_file(SPLIT)
    first = _run(capsys, ["rates", "--model", path])
    second = _run(capsys, ["rates", "--model", path])
    assert first == second


def test_json_numbers_round_trip(capsys, model_file):
    code, out = _run(capsys, ["rates", "--model", model_file(SPLIT)])
    assert code == 0
    doc = json.loads(out)
    assert json.loads(json.dumps(doc)) == doc


def test_simulate_json_document(capsys, model_file):
    code, out = _run(capsys, ["simulate", "--model", model_file(SPLIT),
                              "--discipline", "prio-pr",
                              "--customers", "20000", "--seed", "7"])
    assert code == 0
    doc = json.loads(out)
    assert list(doc) == ["model", "discipline", "customers", "seed",
                         "warmup", "analytic", "summary", "fits", "bins"]
    assert doc["discipline"] == "prio-pr"
    assert doc["customers"] == 20000
    assert doc["bins"] is None
    summary = doc["summary"]
    assert set(summary) == {"served", "total_time", "busy_periods",
                            "mean_busy", "mean_waiting", "mean_sojourn"}
    assert summary["served"] == 20000
    assert summary["busy_periods"] >= 1
    fits = doc["fits"]
    assert set(fits) == {"waiting", "sojourn",
                         "class2_waiting", "class2_sojourn"}
    for name in ("class2_waiting", "class2_sojourn"):
        assert fits[name]["analytic"] == doc["analytic"]["gamma_w2"]
    assert fits["waiting"]["analytic"] is None  # not a FIFO run


def test_simulate_fifo_fit_targets_workload_rate(capsys, model_file):
    code, out = _run(capsys, ["simulate", "--model", model_file(MM1),
                              "--discipline", "fifo",
                              "--customers", "100000", "--seed", "3"])
    assert code == 0
    doc = json.loads(out)
    block = doc["fits"]["waiting"]
    assert block["analytic"] == doc["analytic"]["gamma_w"]
    assert doc["fits"]["sojourn"]["analytic"] is None
    assert block["fit"] is not None and block["skipped"] is None
    assert block["fit"]["rate"] > 0
    assert block["comparison"]["analytic"] == doc["analytic"]["gamma_w"]


def test_simulate_csv_records(capsys, model_file):
    code, out = _run(capsys, ["simulate", "--model", model_file(MM1),
                              "--discipline", "fifo",
                              "--customers", "500", "--seed", "1",
                              "--output", "csv"])
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == ("index,arrival,service,class,first_service,"
                        "departure,workload_at_arrival")
    assert len(lines) == 1 + 400  # 20 percent warmup dropped
    row = lines[1].split(",")
    assert float(row[4]) >= float(row[1])


def test_simulate_bins_document(capsys, model_file):
    code, out = _run(capsys, ["simulate", "--model", model_file(MM1),
                              "--discipline", "srpt-pr",
                              "--customers", "50000", "--seed", "5",
                              "--bins", "0.4"])
    assert code == 0
    doc = json.loads(out)
    assert "bins" in doc
    assert doc["bins"], "expected at least one service bin"
    for entry in doc["bins"]:
        assert {"lo", "hi", "count", "analytic"} <= set(entry)
    finite = [b for b in doc["bins"] if b["analytic"] is not None]
    assert finite
    rates = [b["analytic"] for b in finite]
    assert all(r2 <= r1 + 1e-12 for r1, r2 in zip(rates, rates[1:]))


def test_simulate_writes_output_file(capsys, model_file, tmp_path):
    target = tmp_path / "run.json"
    code, out = _run(capsys, ["simulate", "--model", model_file(MM1),
                              "--discipline", "fifo",
                              "--customers", "1000", "--seed", "2",
                              "--out", str(target)])
    assert code == 0
    assert out == ""
    doc = json.loads(target.read_text())
    assert doc["customers"] == 1000


def test_ystar_curve_csv(capsys):
    code, out = _run(capsys, ["ystar-curve", "--rho-grid", "0.3:0.7:0.2",
                              "--output", "csv"])
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "rho,y_star,p_exceed,error"
    assert len(lines) == 4
    row = dict(zip(lines[0].split(","), lines[2].split(",")))
    assert float(row["rho"]) == pytest.approx(0.5, abs=1e-12)
    from queuedecay.dist import Exponential
    from queuedecay.ratecalc import QueueModel
    crit = y_star(QueueModel(Exponential(0.5), Exponential(1.0)))
    assert float(row["y_star"]) == pytest.approx(crit.value, rel=1e-12)
    assert float(row["p_exceed"]) == pytest.approx(crit.tail_prob, rel=1e-12)


def test_ystar_curve_json_deterministic(capsys):
    argv = ["ystar-curve", "--rho-grid", "0.2:0.9:0.1",
            "--output", "json"]
    first = _run(capsys, argv)
    second = _run(capsys, argv)
    assert first == second
    doc = json.loads(first[1])
    assert doc["family"] == "mm1-unit-mean-service"
    assert len(doc["rows"]) == 8


def test_ystar_curve_bad_grid(capsys):
    assert main(["ystar-curve", "--rho-grid", "0.5"]) == 1
    capsys.readouterr()
    assert main(["ystar-curve", "--rho-grid", "0.9:0.1:0.1"]) == 1
    capsys.readouterr()


def test_ystar_curve_per_point_errors_are_rows(capsys):
    # points at or past load 1 fill the error column instead of aborting
    code, out = _run(capsys, ["ystar-curve", "--rho-grid", "0.5:1.5:0.5",
                              "--output", "csv"])
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 4
    assert lines[1].endswith(",")  # rho 0.5 row has an empty error cell
    assert "below 1" in lines[2] and lines[2].startswith("1.0,,,")


def test_validate_single_criterion_runs():
    result = run_criterion(1, quick=True)
    assert result.passed
    assert result.line().startswith("criterion  1")
    assert "PASS" in result.line()


def test_validate_detects_broken_priority_rates(monkeypatch):
    real = queuedecay.validate.gamma_w2

    def never_boundary(model):
        got = real(model)
        return PriorityDecay(rate=got.rate, regime="interior",
                             s_opt=got.s_opt, a=0.0)

    monkeypatch.setattr(queuedecay.validate, "gamma_w2", never_boundary)
    result = queuedecay.validate.run_criterion(2, quick=True)
    assert not result.passed


def test_validate_quick_reports_honest_failure(capsys):
    code, out = _run(capsys, ["validate", "--quick"])
    lines = out.strip().splitlines()
    assert len(lines) == 11
    assert lines[-1] == "passed 9/10 (quick mode)"
    assert sum("PASS" in line for line in lines[:-1]) == 9
    assert "FAIL" in lines[9]
    assert code == 1
