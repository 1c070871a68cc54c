import filecmp
from pathlib import Path

import pytest

from tcbsde.errors import ConfigError
from tcbsde.harness import (
    ExperimentConfig,
    ReportBundle,
    Verdict,
    list_scenarios,
    run_scenario,
    seed_sweep,
)


def test_catalog_spans_modules_and_is_stable():
    specs = list_scenarios()
    assert len(specs) >= 10
    assert {s.module for s in specs} == {"timechange", "wiener", "chain"}
    assert all(s.anchor for s in specs)
    assert [s.name for s in specs] == sorted(s.name for s in specs)
    again = list_scenarios()
    assert [s.name for s in again] == [s.name for s in specs]


def test_unknown_scenario_is_config_error():
    with pytest.raises(ConfigError):
        run_scenario(ExperimentConfig(scenario="does-not-exist"), write=False)


def test_config_file_parsing(tmp_path):
    p = tmp_path / "exp.ini"
    p.write_text(
        "[experiment]\nscenario = quadratic-clock-inverse\nseed = 3\npaths = 500\n"
        "tol = 0.01\n\n[params]\nstep = 0.002\nlabel = probe\n"
    )
    cfg = ExperimentConfig.from_file(p)
    assert cfg.scenario == "quadratic-clock-inverse"
    assert cfg.seed == 3 and cfg.paths == 500 and cfg.tol == 0.01
    assert cfg.params["step"] == 0.002
    assert cfg.params["label"] == "probe"


def test_config_rejects_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario="x", seed=-1)
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario="x", paths=0)
    p = tmp_path / "bad.ini"
    p.write_text("[experiment]\nseed = 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(p)


def test_verdict_lines_carry_values():
    v = Verdict.check("gap", 0.5, 1.0)
    assert v.passed and "gap" in v.line() and "0.5" in v.line() and "1" in v.line()
    v2 = Verdict.check("gap", 2.0, 1.0)
    assert not v2.passed and v2.line().startswith("FAIL")


def test_bundle_written_layout(tmp_path):
    cfg = ExperimentConfig(scenario="quadratic-clock-inverse", seed=5, out=str(tmp_path))
    bundle = run_scenario(cfg)
    out = tmp_path / "quadratic-clock-inverse"
    report = (out / "report.txt").read_text()
    assert "PASS" in report and "threshold" in report
    assert (out / "probes.csv").exists()


def test_identical_seeds_identical_tables(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        run_scenario(ExperimentConfig(scenario="brownian-variance", seed=11, paths=2000, out=str(out)))
    fa = a / "brownian-variance" / "step_variance.csv"
    fb = b / "brownian-variance" / "step_variance.csv"
    assert fa.read_bytes() == fb.read_bytes()


def test_sweep_identical_seeds_identical_bundles(tmp_path):
    cfg = ExperimentConfig(scenario="quadratic-clock-inverse", out=str(tmp_path))
    agg = seed_sweep(cfg, [4, 4], write=False)
    rates = dict((r[0], r[1]) for r in agg.tables["pass_rates"][1])
    assert all(v == 1.0 for v in rates.values())


def test_sweep_needs_two_seeds(tmp_path):
    cfg = ExperimentConfig(scenario="quadratic-clock-inverse", out=str(tmp_path))
    with pytest.raises(ConfigError):
        seed_sweep(cfg, [1], write=False)


def test_sweep_dispersion_against_reported_se(tmp_path):
    cfg = ExperimentConfig(
        scenario="lsmc-vs-closed-form", paths=4000, out=str(tmp_path),
        params={"steps": 25},
    )
    agg = seed_sweep(cfg, list(range(6)), write=False)
    disp = [v for v in agg.verdicts if v.name == "dispersion.y0"]
    assert disp and disp[0].passed


def test_cli_exit_codes(tmp_path):
    from tcbsde.cli import main

    assert main(["list"]) == 0
    assert main(["run", "--scenario", "identity-clock-roundtrip", "--out", str(tmp_path)]) == 0
    assert main(["run", "--scenario", "nope", "--out", str(tmp_path)]) == 2
    assert main(["run", "--out", str(tmp_path)]) == 2


def test_cli_config_file(tmp_path):
    from tcbsde.cli import main

    p = tmp_path / "exp.ini"
    p.write_text("[experiment]\nscenario = psi-properties\nseed = 2\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "psi-properties" / "report.txt").exists()


def test_out_dir_env_fallback(tmp_path, monkeypatch):
    from tcbsde.harness import OUT_DIR_ENV

    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "envout"))
    cfg = ExperimentConfig(scenario="identity-clock-roundtrip")
    run_scenario(cfg)
    assert (tmp_path / "envout" / "identity-clock-roundtrip" / "report.txt").exists()
