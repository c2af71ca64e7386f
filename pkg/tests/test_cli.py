import csv
import json
import os

import numpy as np
import pytest

from main import build_parser, interleaved_modes, main, run


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def test_parser_accepts_shared_flags():
    args = build_parser().parse_args(["evolve", "--n-trunc", "12", "--strip-height", "0.3", "--threads", "2"])
    assert args.command == "evolve"
    assert (args.n_trunc, args.strip_height, args.threads) == (12, 0.3, 2)


def test_interleaved_modes():
    assert interleaved_modes(5) == [0, 1, -1, 2, -2]


def test_spectrum_of_laplacian(tmp_path, data_path):
    code = main(["spectrum", "--config", data_path("minus_d2.json"), "--out", str(tmp_path)])
    assert code == 0
    out = tmp_path / "spectrum"
    rows = read_csv(out / "spectrum.csv")
    values = np.array([float(r["re_lambda"]) for r in rows])
    expected = np.sort(np.arange(-32, 33) ** 2)[: len(values)]
    assert np.max(np.abs(values - expected)) < 1e-10
    assert all(float(r["residual"]) < 1e-10 for r in rows)
    with open(out / "manifest.json", encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["files"] == ["spectrum.csv", "growth.csv"]
    assert {r["config_hash"] for r in rows} == {manifest["config_hash"]}
    assert manifest["summary"]["weyl"]["passed"]
    assert "similarity" not in manifest["summary"]


def test_spectrum_runs_similarity_check(tmp_path, data_path):
    assert run("spectrum", data_path("similarity_cos.json"), {"out": str(tmp_path)}) == 0
    with open(tmp_path / "spectrum" / "manifest.json", encoding="utf-8") as f:
        similarity = json.load(f)["summary"]["similarity"]
    assert similarity["modes"] == 21
    assert similarity["max_sine"] < 1e-7
    assert similarity["max_eigenvalue_error"] < 1e-10


@pytest.mark.slow
def test_monodromy_on_similarity_operator(tmp_path, data_path):
    assert run("monodromy", data_path("similarity_cos.json"), {"out": str(tmp_path)}) == 0
    with open(tmp_path / "monodromy" / "manifest.json", encoding="utf-8") as f:
        summary = json.load(f)["summary"]
    assert summary["eigenvalues"] == 21
    assert summary["gronwall_overflows"] == 0
    assert summary["gronwall_violations"] == 0


def test_runs_are_byte_identical(tmp_path, data_path):
    for name in ("first", "second"):
        assert run("spectrum", data_path("minus_d2.json"), {"out": str(tmp_path / name), "n_trunc": 8}) == 0
    for filename in ("spectrum.csv", "growth.csv"):
        first = (tmp_path / "first" / "spectrum" / filename).read_bytes()
        second = (tmp_path / "second" / "spectrum" / filename).read_bytes()
        assert first == second


def test_validation_failure_writes_error_record(tmp_path, data_path):
    argv = ["spectrum", "--config", data_path("minus_d2.json"), "--out", str(tmp_path),
            "--n-trunc", "400", "--strip-height", "1"]
    assert main(argv) == 2
    with open(tmp_path / "spectrum" / "error.json", encoding="utf-8") as f:
        record = json.load(f)
    assert record["error"] == "ConfigurationError"
    assert record["exit_code"] == 2
    assert "n_trunc" in record["message"]


def test_missing_config_file(tmp_path):
    assert run("kernel", str(tmp_path / "nope.json"), {"out": str(tmp_path)}) == 2
    assert os.path.exists(tmp_path / "kernel" / "error.json")


@pytest.mark.parametrize("config", [
    {"operator": {"named": "mathieu", "q": "one"}},
    {"operator": {"named": "mathieu"}, "run": {"shift": "foo"}},
])
def test_bad_config_values_exit_with_error_record(tmp_path, config):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    assert run("evolve", str(path), {"out": str(tmp_path)}) == 2
    with open(tmp_path / "evolve" / "error.json", encoding="utf-8") as f:
        record = json.load(f)
    assert record["exit_code"] == 2
    assert record["error"] in ("ValidationError", "ConfigurationError")


def test_kernel_battery(tmp_path, data_path):
    assert run("kernel", data_path("minus_d2.json"), {"out": str(tmp_path)}) == 0
    with open(tmp_path / "kernel" / "manifest.json", encoding="utf-8") as f:
        summary = json.load(f)["summary"]
    assert summary["continuity_violations"] == 0
    assert summary["max_reproducing_error"] < 1e-11
    assert summary["pairs"] > 0


def test_evolve_on_mathieu(tmp_path, data_path):
    flags = {"out": str(tmp_path), "n_trunc": 32}
    assert run("evolve", data_path("mathieu.json"), flags) == 0
    out = tmp_path / "evolve"
    with open(out / "manifest.json", encoding="utf-8") as f:
        summary = json.load(f)["summary"]
    assert summary["continuity_passed"]
    assert summary["max_law_defect"] < 1e-8
    assert summary["contraction"]["passed"]
    rows = read_csv(out / "continuity.csv")
    assert [float(r["t"]) for r in rows] == [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]


@pytest.mark.slow
def test_monodromy_on_laplacian(tmp_path, data_path):
    assert run("monodromy", data_path("minus_d2.json"), {"out": str(tmp_path)}) == 0
    out = tmp_path / "monodromy"
    rows = read_csv(out / "eigenvalues.csv")
    assert sum(int(r["multiplicity"]) for r in rows) == 7
    assert sorted({round(float(r["re_lambda"])) for r in rows}) == [0, 1, 4, 9]
    with open(out / "manifest.json", encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["files"] == ["eigenvalues.csv", "scan.csv", "gronwall.csv"]
    assert manifest["summary"]["gronwall_violations"] == 0


@pytest.mark.slow
def test_crosscheck_on_mathieu(tmp_path, data_path):
    flags = {"out": str(tmp_path), "n_trunc": 32}
    assert run("crosscheck", data_path("mathieu.json"), flags) == 0
    with open(tmp_path / "crosscheck" / "manifest.json", encoding="utf-8") as f:
        summary = json.load(f)["summary"]
    assert summary["passed"]
    assert summary["max_resolvent_residual"] < 1e-8


@pytest.mark.slow
def test_completeness_on_exp_cos_family(tmp_path, data_path):
    assert run("completeness", data_path("exp_cos_a2.json"), {"out": str(tmp_path)}) == 0
    out = tmp_path / "completeness"
    atlas = read_csv(out / "atlas.csv")
    assert any(r["collision_found"] == "1" for r in atlas)
    with open(out / "manifest.json", encoding="utf-8") as f:
        summary = json.load(f)["summary"]
    assert summary["t_star"] is not None
    assert summary["witness_defect"] < 1e-7
    assert summary["positive_max_residual"] < 1e-3
    assert summary["max_pairing"] < 1e-7
    assert summary["max_first_order_resolvent_difference"] < 1e-6
    assert summary["certificate_misses"] == 0
    with open(out / "manifest.json", encoding="utf-8") as f:
        assert "first_order_resolvent.csv" in json.load(f)["files"]
