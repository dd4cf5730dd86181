"""Tests for the CSV and JSON writers."""
import json

import numpy as np

from src.reporting import build_report, format_value, save_report, write_csv


def test_format_value_is_lossless():
    value = 0.1 + 0.2
    assert float(format_value(value)) == value
    assert format_value(np.float64(1.5)) == "1.5"
    assert format_value(np.int64(7)) == "7"
    assert format_value(True) == "true"
    assert format_value(np.bool_(False)) == "false"
    assert format_value("abc") == "abc"


def test_write_csv_keeps_column_order(tmp_path):
    rows = [{"b": 2.0, "a": 1}, {"b": 0.25, "a": 3}]
    path = write_csv(tmp_path / "nested" / "out.csv", rows, ["a", "b"])
    assert path.read_text(encoding="utf-8") == "a,b\n1,2\n3,0.25\n"


def test_report_metadata_and_numpy_values(tmp_path):
    report = build_report(
        "density",
        {"c": np.float64(0.5), "values": np.array([1.0, np.inf]), "flag": np.bool_(True)},
        seed=4,
    )
    assert report["metadata"]["command"] == "density"
    assert report["metadata"]["seed"] == 4
    assert "processed_at" in report["metadata"]

    path = save_report(report, tmp_path / "report.json")
    loaded = json.loads(path.read_text(encoding="utf-8"))
    assert loaded["results"] == {"c": 0.5, "values": [1.0, "inf"], "flag": True}
