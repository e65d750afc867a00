import filecmp
import json
import math

import numpy as np

from born_infeld.reports import (CSV_COLUMNS, EstimateReport, exit_code, read_jsonl, reports_frame,
                                 to_json_safe, write_reports)


def _reports():
    return [EstimateReport(name="theorem1", instance_id="a", lhs=2.0, rhs=1.0, constants={"c": np.float64(0.5)}),
            EstimateReport(name="theorem1", instance_id="b", lhs=1.0, rhs=1.0 + 1e-8),
            EstimateReport.reject("haarala", "c", "B_R leaves the grid", {"R": 2e3})]


def test_status():
    passed, close, rejected = _reports()
    assert passed.status == "pass" and passed.slack == 1.0
    assert close.status == "pass"
    assert EstimateReport(name="x", instance_id="0", lhs=1.0, rhs=2.0).status == "fail"
    assert rejected.status == "rejected" and not rejected.passed
    assert EstimateReport(name="x", instance_id="0", lhs=math.nan, rhs=0.0).status == "fail"
    assert EstimateReport(name="x", instance_id="0", lhs=math.inf, rhs=math.inf).status == "fail"


def test_exit_code():
    reports = _reports()
    assert exit_code(reports) == 0
    reports.append(EstimateReport(name="x", instance_id="0", lhs=0.0, rhs=1.0))
    assert exit_code(reports) == 1


def test_to_json_safe():
    value = {"a": np.float32(1.5), "b": [np.int64(3), math.inf], "c": np.array([True, False]), 4: None}
    assert to_json_safe(value) == {"a": 1.5, "b": [3, None], "c": [True, False], "4": None}


def test_write_reports(tmp_path):
    write_reports(_reports(), tmp_path / "one")
    write_reports(_reports(), tmp_path / "two")
    for name in ("reports.jsonl", "reports.csv", "schema.json"):
        assert filecmp.cmp(tmp_path / "one" / name, tmp_path / "two" / name, shallow=False)
    rows = read_jsonl(tmp_path / "one" / "reports.jsonl")
    assert [r["instance"] for r in rows] == ["a", "b", "c"]
    assert rows[2]["status"] == "rejected" and rows[2]["lhs"] is None
    assert rows[0]["constants"] == {"c": 0.5}
    schema = json.loads((tmp_path / "one" / "schema.json").read_text())
    assert set(schema) == set(CSV_COLUMNS)


def test_reports_frame():
    df = reports_frame(_reports())
    assert list(df.columns) == CSV_COLUMNS
    assert df["pass"].tolist() == [True, True, False]
