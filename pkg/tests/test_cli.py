import json

import pytest

from flattenquant.main import main
from flattenquant.quant.tensor_io import TensorArchive, read_archive, write_archive

SMALL = ["--layers", "2", "--in-features", "64", "--out-features", "32", "--tokens", "32", "--batches", "2",
         "--eval-tokens", "16"]
STAGES = ["gen", "calibrate", "plan", "quantize", "infer", "report"]


def run(stage, workdir, *extra):
    prefix = ["--log-level", "CRITICAL"]
    return main([*prefix, stage, "--workdir", str(workdir), *SMALL, *extra])


def run_all(workdir, *extra):
    for stage in STAGES:
        assert run(stage, workdir, *extra) == 0, stage


def error_doc(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.strip()]
    return json.loads(lines[-1])


def test_full_pipeline(tmp_path, capsys):
    workdir = tmp_path / "run"
    run_all(workdir)
    capsys.readouterr()
    assert run("report", workdir) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["command"] == "report"

    report = json.loads((workdir / "report.json").read_text())
    assert report["schema_version"] == 1
    assert report["config"]["mode"] == "o2"
    assert "workdir" not in report["config"]
    assert [layer["name"] for layer in report["layers"]] == ["layer_00", "layer_01"]

    stats = json.loads((workdir / "stats" / "layer_00.json").read_text())
    assert len(stats["max_abs"]) == 64
    outputs = read_archive(workdir / "output.fqta")
    assert outputs["layer_00"].shape == (16, 32)


@pytest.mark.parametrize("mode", ["o1", "o3", "w8a8", "smoothquant"])
def test_every_mode_runs(tmp_path, mode):
    run_all(tmp_path / mode, "--mode", mode)


def test_runs_are_byte_identical_across_workdirs(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    run_all(first)
    run_all(second)
    for artifact in ["model.fqta", "quantized.fqta", "output.fqta", "report.json", "recipes/layer_01.json",
                     "plans/layer_00.json", "stats/layer_00.json"]:
        assert (first / artifact).read_bytes() == (second / artifact).read_bytes(), artifact


def test_gen_reports_planted_channels(tmp_path, capsys):
    assert run("gen", tmp_path, "--outlier-fraction", "0.05") == 0
    summary = json.loads(capsys.readouterr().out)
    assert len(summary["outlier_channels"]["layer_00"]) == 3
    assert summary["profiles"]["layer_01"] == "bounded"
    assert summary["outlier_channels"]["layer_01"] == []


def test_gen_bounded_fraction_flag(tmp_path, capsys):
    assert run("gen", tmp_path, "--bounded-fraction", "0") == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary["profiles"].values()) == {"outlier"}


def test_empty_calibration_archive(tmp_path, capsys):
    assert run("gen", tmp_path) == 0
    write_archive(TensorArchive(), tmp_path / "calib" / "layer_00.fqta")
    capsys.readouterr()

    assert run("calibrate", tmp_path) == 2
    doc = error_doc(capsys)
    assert doc["error"] == "empty calibration set"
    assert doc["code"] == "empty_calibration"


def test_invalid_flag_value(tmp_path, capsys):
    assert run("gen", tmp_path, "--alpha", "2") == 2
    doc = error_doc(capsys)
    assert doc["code"] == "invalid_parameter"
    assert any("alpha" in e for e in doc["detail"]["errors"])


def test_missing_model(tmp_path, capsys):
    assert run("calibrate", tmp_path) == 2
    assert error_doc(capsys)["code"] == "artifact_error"


def test_stage_configuration_must_agree(tmp_path, capsys):
    assert run("gen", tmp_path) == 0
    assert run("calibrate", tmp_path, "--beta", "1.3") == 0
    capsys.readouterr()

    assert run("plan", tmp_path, "--beta", "1.5") == 2
    doc = error_doc(capsys)
    assert doc["code"] == "artifact_error"
    assert doc["detail"]["fields"] == ["beta"]


def test_corrupt_archive(tmp_path, capsys):
    assert run("gen", tmp_path) == 0
    (tmp_path / "model.fqta").write_bytes(b"JUNK")
    capsys.readouterr()

    assert run("calibrate", tmp_path) == 2
    assert error_doc(capsys)["code"] in {"bad_magic", "truncated_payload"}


def test_sweep_command(tmp_path):
    assert run("gen", tmp_path) == 0
    assert run("sweep", tmp_path, "--param", "beta", "--values", "1.1", "1.3", "1.5") == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("beta,")
    assert len(lines) == 4
    assert json.loads((tmp_path / "sweep.json").read_text())["param"] == "beta"


def test_logs_go_to_stderr(tmp_path, capsys):
    assert main(["--log-level", "INFO", "--log-format", "json", "gen", "--workdir", str(tmp_path), *SMALL]) == 0
    captured = capsys.readouterr()
    assert json.loads(captured.out)["command"] == "gen"
    assert "Synthetic model generated" in captured.err
