from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import pytest

from fracthick.cli import (EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, ConfigError,
                           ExperimentConfig, main, manifest_path, run)

EXPERIMENTS = sorted((Path(__file__).parent.parent / "experiments").glob("*.json"))


def _json_out(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


def _csv_rows(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_svc_build_example(capsys):
    assert main(["svc-build", "--r-const", "1/2", "--depth", "2"]) == EXIT_OK
    out = _json_out(capsys)
    assert out["count"] == 4 and len(out["intervals"]) == 4
    assert out["measure"] == "1/4"
    assert out["intervals"][1] == ["3/16", "1/4"]


def test_thickness_full_line_example(capsys):
    assert main(["thickness", "--set", "full-line", "--L", "0.25"]) == EXIT_OK
    text = capsys.readouterr().out
    assert text.startswith("# fracthick thickness config_sha256=")
    rows = _csv_rows(text)
    assert len(rows) == 1 and float(rows[0]["theta"]) == 1.0


def test_svc_build_csv_is_exact(capsys):
    assert main(["svc-build", "--r-const", "1/3", "--depth", "1", "--format", "csv"]) == EXIT_OK
    rows = _csv_rows(capsys.readouterr().out)
    assert [(r["a"], r["b"]) for r in rows] == [("0", "1/3"), ("2/3", "1")]


def test_bad_literal_reports_pointer(capsys):
    assert main(["svc-build", "--r-const", "half", "--depth", "2"]) == EXIT_VALIDATION
    assert "/parameters/svc/values/0" in capsys.readouterr().err


def test_ratio_out_of_range_is_validation_error(capsys):
    assert main(["svc-build", "--r-const", "3/2", "--depth", "2"]) == EXIT_VALIDATION


def test_unknown_command_is_validation_error(capsys):
    assert main(["frobnicate"]) == EXIT_VALIDATION


def test_schema_violation_in_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "svc-build",
                               "parameters": {"svc": {"mode": "constant", "values": ["1/2"]},
                                              "depth": "deep"}}))
    assert main(["run", "--config", str(cfg)]) == EXIT_VALIDATION
    assert "/parameters/depth" in capsys.readouterr().err


def test_unknown_command_in_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "nope", "parameters": {}}))
    assert main(["run", "--config", str(cfg)]) == EXIT_VALIDATION
    assert "/command" in capsys.readouterr().err


def test_missing_required_parameter():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig("thickness", {"set": "full-line"}).resolved()
    assert info.value.pointer == "/parameters"


def test_budget_overflow_is_numerical_failure(capsys):
    assert main(["svc-build", "--r-param", "1/2,1,2", "--depth", "12"]) == EXIT_NUMERICAL
    assert "ResourceBudgetError" in capsys.readouterr().err


def test_bad_worker_cap(monkeypatch, capsys):
    monkeypatch.setenv("FRACTHICK_MAX_WORKERS", "zero")
    assert main(["thickness", "--set", "full-line", "--L", "1/4"]) == EXIT_VALIDATION


@pytest.mark.parametrize("path", EXPERIMENTS, ids=lambda p: p.stem)
def test_experiment_configs_round_trip_and_validate(path):
    cfg = ExperimentConfig.from_json(path.read_text())
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    cfg.resolved()


def test_round_trip_preserves_hash():
    cfg = ExperimentConfig("thickness", {"set": "full-line", "Ls": ["1/8", "1/4"]}, "out.csv", 7)
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg and again.content_hash() == cfg.content_hash()


def _thickness_cfg(out: Path) -> ExperimentConfig:
    return ExperimentConfig("thickness", {
        "set": {"svc": {"mode": "parametric", "c": "1/2", "C": "1", "alpha": "1/2"}, "depth": 12},
        "Ls": {"lo": "1/256", "hi": "1/8", "count": 6}}, str(out))


def test_artifacts_and_manifest(tmp_path):
    cfg = _thickness_cfg(tmp_path / "prof.csv")
    assert run(cfg) == EXIT_OK
    text = (tmp_path / "prof.csv").read_text()
    digest = cfg.resolved().content_hash()
    assert text.splitlines()[0] == f"# fracthick thickness config_sha256={digest}"
    man = json.loads(manifest_path(tmp_path / "prof.csv").read_text())
    assert man["config_sha256"] == digest
    assert man["config"] == cfg.resolved().to_json_obj()
    assert man["comment"].startswith("fracthick thickness")


def test_outputs_are_deterministic(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACTHICK_MAX_WORKERS", "1")
    assert run(_thickness_cfg(tmp_path / "a.csv")) == EXIT_OK
    monkeypatch.setenv("FRACTHICK_MAX_WORKERS", "2")
    assert run(_thickness_cfg(tmp_path / "b.csv")) == EXIT_OK
    assert run(_thickness_cfg(tmp_path / "c.csv")) == EXIT_OK
    a, b, c = ((tmp_path / n).read_bytes() for n in ("a.csv", "b.csv", "c.csv"))
    assert a == b == c


def test_fit_alpha_from_profile_file(tmp_path, capsys):
    rows = "\n".join(f"{2.0 ** -k!r},{__import__('math').exp(-(2.0 ** -k) ** -0.5)!r}" for k in range(3, 15))
    prof = tmp_path / "p.csv"
    prof.write_text("# synthetic\nL,theta\n" + rows + "\n")
    assert main(["fit-alpha", "--profile", str(prof)]) == EXIT_OK
    out = _json_out(capsys)
    assert abs(out["alpha_hat"] - 0.5) < 1e-6


def test_fit_alpha_boundary_is_numerical_failure(capsys):
    assert main(["fit-alpha", "--set", "full-line", "--L-range", "1/1024,1/8,10"]) == EXIT_NUMERICAL


def test_fit_alpha_pipeline_on_svc_complement(tmp_path):
    cfg = ExperimentConfig.from_json((Path(__file__).parent.parent / "experiments" / "c4_fit_alpha.json").read_text())
    cfg.output_path = str(tmp_path / "fit.json")
    assert run(cfg) == EXIT_OK
    out = json.loads((tmp_path / "fit.json").read_text())
    assert 0.45 <= out["alpha_hat"] <= 0.55


def test_spectral_csv(capsys):
    assert main(["spectral", "--omega", '{"intervals": [["-2", "2"]]}', "--lambdas", "0,4,16",
                 "--N", "128"]) == EXIT_OK
    rows = _csv_rows(capsys.readouterr().out)
    assert list(rows[0]) == ["lambda", "d_lambda"]
    assert float(rows[0]["d_lambda"]) == pytest.approx(0.5)


def test_observability_csv(capsys):
    assert main(["observability", "--set", "svc", "--r-param", "1/2,1,1/2", "--depth", "6",
                 "--N", "256", "--s", "1", "--Ts", "0.2:1:3", "--alpha", "1/2",
                 "--mus", "2:30:6"]) == EXIT_OK
    rows = _csv_rows(capsys.readouterr().out)
    assert list(rows[0]) == ["T", "C_meas", "C_predicted"] and len(rows) == 3


def test_necessity_csv_and_manifest(tmp_path):
    out = tmp_path / "nec.csv"
    assert main(["necessity", "--set", "full-line", "--s", "1/3", "--T", "0.1", "--hs", "6:7",
                 "--eta", "0.2", "-o", str(out)]) == EXIT_OK
    rows = _csv_rows(out.read_text())
    assert list(rows[0]) == ["h", "t_max", "lhs", "rhs", "ratio", "eta", "R"]
    man = json.loads(manifest_path(out).read_text())
    assert man["results"]["probe"]["s"] == pytest.approx(1 / 3)
    assert "lhs_vs_plancherel_max_rel" in man["results"]["certificates"]


def test_probe_asymptotics_writes_exterior_table(tmp_path):
    out = tmp_path / "probe.csv"
    assert main(["probe-asymptotics", "--s", "1/2", "--T", "1", "--hs", "4:6", "--eta", "0.2",
                 "--x-exterior", "0.45", "-o", str(out)]) == EXIT_OK
    assert _csv_rows(out.read_text())[0].keys() == {"h", "max_rel_error", "t", "x"}
    ext = tmp_path / "probe.exterior.csv"
    assert ext.exists() and ext.read_text().startswith("# fracthick probe-asymptotics")


def test_thickness_csv_encloses_theta(tmp_path):
    out = tmp_path / "prof.csv"
    assert run(_thickness_cfg(out)) == EXIT_OK
    rows = _csv_rows(out.read_text())
    assert list(rows[0]) == ["L", "theta", "argmin_x", "lower_bound", "upper_bound"]
    for r in rows:
        assert float(r["lower_bound"]) == float(r["theta"]) <= float(r["upper_bound"]) <= 1
