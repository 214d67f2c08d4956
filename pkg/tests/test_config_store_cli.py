from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spde_lab.cli import EXIT_OK, EXIT_USAGE, main, render_report
from spde_lab.config import ConfigError, config_from_dict, load_config, parse_config
from spde_lab.ensemble import series_from_csv
from spde_lab.grid import inner_product, principal_eigenpair
from spde_lab.store import IntegrityError, RunStore, diff_series

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """\
schema_version: 1
name: small
problem:
  domain: {kind: bounded, a: 0.0, b: 1.0}
  n: 16
model:
  drift: {kind: zero}
  diffusion: {kind: linear, C: 1.0}
noise: {kind: scalar}
initial_condition: {family: sine, params: {amp: 1.0, mode: 1}}
solver: {dt0: 0.001, t_end: 0.02}
ensemble:
  m_paths: 16
  base_seed: 1
  record_times: [0.0, 0.01, 0.02]
  functionals:
    - {name: eigen_moment_sq}
    - {name: mean_field}
oracles: [fujita_classify]
"""


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path):
    cfg = load_config(path)
    again = parse_config(cfg.to_yaml())
    assert again.to_dict() == cfg.to_dict()
    assert again.config_hash() == cfg.config_hash()


def test_scaled_eigenmode_hits_requested_projection():
    cfg = load_config(CONFIGS / "eigen_moment_blowup.yaml")
    _, phi = principal_eigenpair(cfg.grid())
    assert inner_product(cfg.initial_field(), phi) == pytest.approx(2 * np.pi, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 500))
def test_overrides_change_hash(seed, paths):
    cfg = parse_config(SMALL)
    other = cfg.with_overrides(seed=seed, paths=paths)
    assert other.ensemble.base_seed == seed and other.ensemble.m_paths == paths
    same = seed == cfg.ensemble.base_seed and paths == cfg.ensemble.m_paths
    assert (other.config_hash() == cfg.config_hash()) == same


@pytest.mark.parametrize("mutate,where", [
    (lambda d: d.update(schema_version=2), "schema_version"),
    (lambda d: d.update(bogus={}), "bogus"),
    (lambda d: d["problem"].update(n=1), "problem.n"),
    (lambda d: d["model"]["diffusion"].update(bounds={"C1": 3.0, "C2": 1.0, "gamma": 1.0, "gamma1": 1.0}),
     "model.diffusion.bounds"),
    (lambda d: d.update(oracles=["nope"]), "oracles[0]"),
    (lambda d: d["noise"].update(kind="correlated", covariance="nope"), "noise"),
])
def test_config_errors_name_the_field(mutate, where):
    import yaml

    raw = yaml.safe_load(SMALL)
    mutate(raw)
    with pytest.raises(ConfigError) as err:
        config_from_dict(raw)
    assert err.value.path.startswith(where)


def _artifacts(text="a"):
    return {"series.csv": f"t,functional,estimate,stderr,censored,blown_fraction\n0,x,{text},0,0,0\n"}


def test_store_is_idempotent_and_content_addressed(tmp_path):
    store = RunStore(tmp_path)
    a = store.store_run("h", 1, _artifacts("1"))
    b = store.store_run("h", 1, _artifacts("1"))
    c = store.store_run("h", 1, _artifacts("2"))
    assert a == b != c
    assert len(list((tmp_path / "runs").iterdir())) == 2
    assert [r.run_id for r in store.find_by_config_hash("h")] == sorted([a, c])


def test_store_detects_tampering(tmp_path):
    store = RunStore(tmp_path)
    rid = store.store_run("h", 1, _artifacts())
    (store.run_dir(rid) / "series.csv").write_text("tampered", encoding="utf-8")
    with pytest.raises(IntegrityError):
        store.load(rid)


def test_diff_series_flags_large_deviation():
    t = np.array([0.0, 1.0])
    a = {"x": (t, np.array([1.0, 2.0]), np.array([0.1, 0.1]))}
    b = {"x": (t, np.array([1.05, 2.5]), np.array([0.1, 0.1]))}
    row = diff_series(a, b, n_sigma=3)["x"]
    assert row.max_deviation == pytest.approx(0.5)
    assert row.flagged


def test_cli_ensemble_store_and_report(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "store"
    assert main(["ensemble", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    (run,) = list((out / "runs").iterdir())
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["seed"] == 1 and set(manifest["artifacts"]) >= {"series.csv", "thresholds.json", "report.md"}
    series = series_from_csv((run / "series.csv").read_text())
    assert "eigen_moment_sq" in series and "mean_field[0]" in series
    rep = tmp_path / "report"
    assert main(["report", str(run), "--out", str(rep), "--quiet"]) == EXIT_OK
    assert (rep / f"{run.name}_report.md").exists() and (rep / f"{run.name}_plot.csv").exists()


def test_cli_zero_noise_has_zero_stderr(tmp_path):
    cfg = _write(tmp_path, SMALL.replace("{kind: linear, C: 1.0}", "{kind: zero}"))
    out = tmp_path / "store"
    assert main(["ensemble", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    (run,) = list((out / "runs").iterdir())
    _, _, se = series_from_csv((run / "series.csv").read_text())["eigen_moment_sq"]
    assert np.all(se == 0)


def test_cli_seed_override_changes_run(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "store"
    main(["ensemble", "--config", str(cfg), "--out", str(out), "--quiet"])
    main(["ensemble", "--config", str(cfg), "--out", str(out), "--quiet", "--seed", "9"])
    store = RunStore(out)
    ids = sorted(p.name for p in (out / "runs").iterdir())
    assert len(ids) == 2
    diff = store.diff_runs(*ids, n_sigma=1.0)
    assert "eigen_moment_sq" in diff


def test_cli_simulate_writes_path(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "store"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
    (run,) = list((out / "runs").iterdir())
    verdict = json.loads((run / "verdict.json").read_text())
    assert verdict["kind"] == "completed"
    assert (run / "path.csv").read_text().startswith("t,eigen_projection,sup_norm")


def test_cli_thresholds_reports_both_bounds(tmp_path, capsys):
    assert main(["thresholds", "--config", str(CONFIGS / "eigen_moment_blowup.yaml")]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    bounds = data["eigen_moment_threshold"]["result"]["extras"]["blowup_time_bounds"]
    assert set(bounds) == {"unit_gain", "doubled_gain"}
    assert bounds["unit_gain"]["value"] == pytest.approx(2 * bounds["doubled_gain"]["value"])


def test_cli_usage_errors(tmp_path):
    assert main(["ensemble"]) == EXIT_USAGE
    assert main(["ensemble", "--config", str(tmp_path / "missing.yaml")]) == EXIT_USAGE
    bad = _write(tmp_path, SMALL.replace("schema_version: 1", "schema_version: 7"))
    assert main(["ensemble", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == EXIT_USAGE


def test_cli_verify_quick_suite_passes():
    assert main(["verify", "1,2", "--quiet"]) == EXIT_OK


def test_report_marks_ode_bound():
    csv_text = "t,functional,estimate,stderr,censored,blown_fraction\n0,eigen_moment_sq,39.4,0,0,0\n0.01,eigen_moment_sq,40,1,0,0\n"
    thresholds = {"eigen_moment_threshold": {"applicable": True, "result": {
        "verdict": "BlowupPredicted",
        "hypotheses": {"projection": 2 * np.pi, "lambda1": np.pi**2, "q1": 1.0, "C1": 1.0, "gamma": 2.0}}}}
    md, plot = render_report({"name": "x"}, csv_text, thresholds)
    assert "ODE lower bound" in md
    first = plot.splitlines()[1].split(",")
    assert float(first[4]) == pytest.approx(4 * np.pi**2)
