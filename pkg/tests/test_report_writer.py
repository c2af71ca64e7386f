import csv
import json

import numpy as np

from src.errors import NearSingularError, ValidationError
from src.report_writer import write_csv, write_error, write_json, write_manifest


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def test_csv_layout_and_cell_formatting(tmp_path):
    rows = [
        {"index": 0, "value": 1.0, "flag": True, "note": None},
        {"index": np.int64(1), "value": np.float64(0.1), "flag": np.bool_(False), "note": "x"},
    ]
    path = write_csv(str(tmp_path / "out"), "table.csv", rows, "abc123")
    body = read_rows(path)
    assert body[0] == ["config_hash", "index", "value", "flag", "note"]
    assert body[1] == ["abc123", "0", "1.0000000000000000e+00", "1", ""]
    assert body[2] == ["abc123", "1", "1.0000000000000001e-01", "0", "x"]


def test_csv_explicit_columns_and_ragged_rows(tmp_path):
    rows = [{"a": 1}, {"b": 2.5, "a": 3}]
    body = read_rows(write_csv(str(tmp_path), "t.csv", rows, "h", columns=["b", "a"]))
    assert body[0] == ["config_hash", "b", "a"]
    assert body[1] == ["h", "", "1"]
    assert body[2][1] == "2.5000000000000000e+00"
    inferred = read_rows(write_csv(str(tmp_path), "u.csv", rows, "h"))
    assert inferred[0] == ["config_hash", "a", "b"]


def test_json_converts_numpy_and_complex(tmp_path):
    record = {"z": 1 + 2j, "arr": np.arange(3), "flag": np.bool_(True), "x": np.float32(0.5), 3: "key"}
    with open(write_json(str(tmp_path), "r.json", record), encoding="utf-8") as f:
        loaded = json.load(f)
    assert loaded == {"z": [1.0, 2.0], "arr": [0, 1, 2], "flag": True, "x": 0.5, "3": "key"}


def test_manifest_lists_file_names(tmp_path):
    files = [str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]
    path = write_manifest(str(tmp_path), "spectrum", "hash", 7, files, 1.23456, {"passed": True})
    with open(path, encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["files"] == ["a.csv", "b.csv"]
    assert manifest["seed"] == 7
    assert manifest["elapsed_seconds"] == 1.235
    assert manifest["summary"] == {"passed": True}
    assert set(manifest) == {"command", "config_hash", "seed", "files", "timestamp", "elapsed_seconds", "summary"}


def test_error_record(tmp_path):
    path = write_error(str(tmp_path), ValidationError("keep must be positive"), "h1")
    with open(path, encoding="utf-8") as f:
        record = json.load(f)
    assert record == {"error": "ValidationError", "message": "keep must be positive", "exit_code": 2, "config_hash": "h1"}
    assert NearSingularError("close", determinant=1e-13).exit_code == 3
