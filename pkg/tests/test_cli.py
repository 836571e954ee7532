import json
import os

import pytest

from rump.cli import EXIT_ASSUMPTION, EXIT_IO, EXIT_OK, EXIT_SCHEMA, EXIT_USAGE, RunConfig, UsageError, main

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")

CE = ["--market", os.path.join(DATA, "ce_market.json"), "--utility", os.path.join(DATA, "ce_utility.json")]


def _report(capsys):
    return json.loads(capsys.readouterr().out)


def test_validate(capsys):
    assert main(["validate"] + CE) == EXIT_OK
    report = _report(capsys)
    assert report["schema_version"] == "1.0"
    assert report["valid"]
    assert report["nodes"] == 3
    assert report["reachable_terminal_paths"] == ["/dn", "/up"]
    assert report["ae_certificate"]["eta"] == 0.75


def test_audit(capsys):
    assert main(["audit"] + CE) == EXIT_OK
    report = _report(capsys)
    assert report["passed"]
    assert report["verdicts"]["H_nonempty"] == "pass"
    assert report["verdicts"]["AE"] == "pass"
    assert report["verdicts"]["negativity"] == "pass"
    # no type_a block in the utility document
    assert report["verdicts"]["type_A"] == "skipped"
    assert "type_A" not in report["details"]
    assert report["details"]["alpha"]["/"] == pytest.approx(0.4)


def test_audit_without_kernel(capsys):
    args = ["audit", "--market", os.path.join(DATA, "arbitrage_market.json"), "--utility", os.path.join(DATA, "ce_utility.json")]
    assert main(args) == EXIT_OK
    report = _report(capsys)
    assert not report["passed"]
    assert report["verdicts"]["H_nonempty"] == "fail"
    assert "H-kernel not found" in report["messages"]
    assert report["details"]["failing_nodes"] == ["/"]


def test_solve_refuses_failed_assumptions(capsys):
    args = ["solve", "--market", os.path.join(DATA, "arbitrage_market.json"), "--utility", os.path.join(DATA, "ce_utility.json")]
    assert main(args) == EXIT_ASSUMPTION
    report = _report(capsys)
    assert report["status"] == "assumption_failure"
    assert "bracket" not in report


def test_schema_error():
    args = ["validate", "--market", os.path.join(DATA, "bad_vertex_market.json"), "--utility", os.path.join(DATA, "ce_utility.json")]
    assert main(args) == EXIT_SCHEMA


def test_missing_file(tmp_path):
    args = ["validate", "--market", str(tmp_path / "missing.json"), "--utility", os.path.join(DATA, "ce_utility.json")]
    assert main(args) == EXIT_IO


@pytest.mark.parametrize(
    "argv",
    [
        ["optimize"] + CE,
        ["validate", "--market", os.path.join(DATA, "ce_market.json")],
        ["reproduce"],
        ["reproduce", "no-such-example"],
        ["solve", "--tol", "0"] + CE,
    ],
)
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_run_config_checks_its_fields():
    with pytest.raises(UsageError):
        RunConfig(command="audit")
    assert RunConfig(command="reproduce", example_id="ce-no-cl").settings().resolution == 2000


def test_reproduce(capsys):
    assert main(["reproduce", "ce-no-cl", "--grid", "101"]) == EXIT_OK
    captured = capsys.readouterr()
    report = json.loads(captured.out)
    assert report["passed"]
    assert "PASS alpha" in captured.err
    assert "FAIL" not in captured.err
    claims = {row["claim"]: row for row in report["claims"]}
    assert claims["n0_star"]["observed"] == 6


def test_solve_writes_a_deterministic_report(tmp_path):
    first, second = tmp_path / "first.json", tmp_path / "second.json"
    assert main(["solve", "--grid", "101", "--out", str(first)] + CE) == EXIT_OK
    assert main(["solve", "--grid", "101", "--out", str(second)] + CE) == EXIT_OK
    assert first.read_text() == second.read_text()

    report = json.loads(first.read_text())
    assert report["status"] == "ok"
    assert report["bracket"] == {"lower_value": 0.0, "u_cl_root": 1.0}
    assert report["gap_bound"] == 1.0
    assert report["value_estimate"] == pytest.approx(0.6, abs=1e-6)
    assert report["bracket_collapsed"] is None
    assert report["policy"]["nodes"][0]["node"] == "/"
    assert report["nodes"][0]["K1_margin"] > 0
    assert not list(tmp_path.glob(".rump-*"))


def test_malformed_vertices_exit_with_schema_status(tmp_path):
    with open(os.path.join(DATA, "ce_market.json")) as fh:
        document = json.load(fh)
    document["nodes"][0]["prior_vertices"] = 5
    market = tmp_path / "market.json"
    market.write_text(json.dumps(document))
    assert main(["validate", "--market", str(market), "--utility", os.path.join(DATA, "ce_utility.json")]) == EXIT_SCHEMA


def test_audit_checks_type_a_when_declared(capsys):
    args = ["audit", "--market", os.path.join(DATA, "s_shape_market.json"), "--utility", os.path.join(DATA, "s_shape_utility.json")]
    assert main(args) == EXIT_OK
    report = _report(capsys)
    assert report["verdicts"]["type_A"] == "pass"
    assert report["details"]["type_A"]["passed"]
