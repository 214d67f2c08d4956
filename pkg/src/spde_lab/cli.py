"""Command-line runner: simulate | ensemble | thresholds | verify | report."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from .config import ConfigError, ExperimentConfig, load_config
from .ensemble import run_ensemble, series_from_csv, series_to_csv
from .integrator import simulate_path
from .noise import RngStream
from .store import IntegrityError, RunStore
from .theory.kaplan import KaplanParams, kaplan_ode_solve
from .theory.registry import run_oracles

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _say(args, *msg):
    if not getattr(args, "quiet", False):
        print(*msg)


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise UsageError("--config is required")
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, paths=getattr(args, "paths", None))


def _store(args, cfg: ExperimentConfig) -> RunStore:
    return RunStore(args.out or cfg.output.directory)


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: ExperimentConfig, store: RunStore, path_index: int = 0) -> str:
    """One path; writes its scalar functionals and verdict as a run."""
    grid = cfg.grid()
    solver = cfg.solver
    rec = solver.record_times or cfg.ensemble.record_times
    if rec != solver.record_times:
        solver = replace(solver, record_times=rec)
    res = simulate_path(cfg.model(), grid, cfg.noise_model(), solver,
                        RngStream(cfg.ensemble.base_seed, path_index), cfg.initial_field(), cfg.whole_space)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    lp_names = [f"lp_integral[{p:g}]" for p in res.lp_integrals]
    w.writerow(["t", "eigen_projection", "sup_norm", *lp_names, "h1"])
    for i, t in enumerate(res.times):
        w.writerow([format(v, ".17g") for v in (t, res.u_hat[i], res.sup_norm[i],
                                                 *(res.lp_integrals[p][i] for p in res.lp_integrals), res.h1[i])])
    verdict = {
        "kind": res.verdict.kind.value, "t": res.verdict.t, "reason": res.verdict.reason,
        "n_steps": res.n_steps, "n_rejected": res.n_rejected,
        "min_dt": res.min_dt if math.isfinite(res.min_dt) else None,
        "boundary_leak": res.boundary_leak,
    }
    return store.store_run(
        cfg.config_hash(), cfg.ensemble.base_seed,
        {"path.csv": buf.getvalue(), "verdict.json": json.dumps(verdict, indent=2, sort_keys=True)},
        summary={"verdict": verdict["kind"], "t": verdict["t"]},
        extra_manifest={"command": "simulate", "config": cfg.to_dict()},
    )


def cmd_ensemble(cfg: ExperimentConfig, store: RunStore) -> str:
    """Ensemble run; stores series.csv, verdicts.json, thresholds.json and report.md."""
    result = run_ensemble(cfg.model(), cfg.grid(), cfg.noise_model(), cfg.solver, cfg.ensemble_config(),
                          cfg.initial_field(), cfg.whole_space)
    series_csv = series_to_csv(result.series)
    verdicts = [{"path": i, "kind": v.kind.value, "t": v.t, "reason": v.reason} for i, v in enumerate(result.verdicts)]
    thresholds = run_oracles(cfg, cfg.oracles)
    thresholds_json = json.dumps(thresholds, indent=2, sort_keys=True)
    manifest_view = {"config_hash": cfg.config_hash(), "seed": cfg.ensemble.base_seed, "name": cfg.name}
    report_md, _ = render_report(manifest_view, series_csv, thresholds)
    blown = sum(v["kind"] == "blowup" for v in verdicts)
    return store.store_run(
        cfg.config_hash(), cfg.ensemble.base_seed,
        {
            "series.csv": series_csv,
            "verdicts.json": json.dumps(verdicts, indent=2),
            "thresholds.json": thresholds_json,
            "report.md": report_md,
        },
        summary={"m_paths": cfg.ensemble.m_paths, "blown_paths": blown},
        extra_manifest={"command": "ensemble", "config": cfg.to_dict()},
    )


def cmd_thresholds(cfg: ExperimentConfig) -> dict:
    return run_oracles(cfg, cfg.oracles)


def cmd_verify(suite: str = "all", quiet: bool = False) -> int:
    from .acceptance import run_suite

    results = run_suite(suite, echo=not quiet)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def _eta_from_thresholds(thresholds: dict):
    """ODE lower bound for the squared eigen-moment, when the eigen-moment oracle applies."""
    entry = thresholds.get("eigen_moment_threshold")
    if not entry or not entry.get("applicable"):
        return None
    h = entry["result"]["hypotheses"]
    proj = float(h["projection"])
    if proj <= 0:
        return None
    lam, q1, C1, gam = float(h["lambda1"]), float(h["q1"]), float(h["C1"]), float(h["gamma"])
    return KaplanParams(lam, 2.0 * q1 * C1**2, 2.0 * lam, gam, proj**2)


def render_report(manifest: dict, series_csv: str, thresholds: dict) -> tuple[str, str]:
    """Markdown summary plus a plot-ready CSV (t, functional, estimate, stderr, bound)."""
    series = series_from_csv(series_csv)
    rows = list(csv.DictReader(io.StringIO(series_csv)))
    blown = {float(r["t"]): float(r["blown_fraction"]) for r in rows}
    kp = _eta_from_thresholds(thresholds)
    eta = None
    if kp is not None and "eigen_moment_sq" in series:
        t_max = float(series["eigen_moment_sq"][0][-1]) if len(series["eigen_moment_sq"][0]) else 0.0
        eta = kaplan_ode_solve(kp, max(t_max, 1e-12))

    lines = [f"# Run report: {manifest.get('name', manifest.get('run_id', ''))}", ""]
    lines += [f"- config hash: `{manifest.get('config_hash', '')}`", f"- seed: {manifest.get('seed', '')}", ""]
    lines += ["## Oracles", ""]
    for name, entry in thresholds.items():
        if not entry.get("applicable"):
            lines.append(f"- {name}: not applicable ({entry.get('reason', '')})")
            continue
        res = entry["result"]
        verdict = res.get("verdict", res.get("class", "")) if isinstance(res, dict) else ""
        lines.append(f"- {name}: {verdict}")
        bounds = res.get("extras", {}).get("blowup_time_bounds") if isinstance(res, dict) else None
        if bounds:
            for label, b in bounds.items():
                lines.append(f"  - blowup-time bound ({label}): {b['value']}")
    lines += ["", "## Series", ""]
    plot = io.StringIO()
    pw = csv.writer(plot, lineterminator="\n")
    pw.writerow(["t", "functional", "estimate", "stderr", "bound"])
    for name, (t, est, se) in series.items():
        if "[" in name and name.split("[")[0] in ("mean_field", "second_moment_field"):
            continue
        with_bound = eta is not None and name == "eigen_moment_sq"
        lines.append(f"### {name}")
        lines.append("")
        header = "| t | estimate | stderr | blown fraction |" + (" ODE lower bound |" if with_bound else "")
        lines.append(header)
        lines.append("|" + "---|" * (5 if with_bound else 4))
        for ti, ei, si in zip(t, est, se):
            bound = eta(ti) if with_bound else None
            cells = [f"{ti:.6g}", f"{ei:.6g}", f"{si:.3g}", f"{blown.get(ti, float('nan')):.3g}"]
            if with_bound:
                cells.append(f"{bound:.6g}")
            lines.append("| " + " | ".join(cells) + " |")
            pw.writerow([format(ti, ".17g"), name, format(ei, ".17g"), format(si, ".17g"),
                         "" if bound is None else format(bound, ".17g")])
        lines.append("")
    return "\n".join(lines), plot.getvalue()


def cmd_report(run_dir, out: Optional[str] = None) -> str:
    run_dir = Path(run_dir)
    store = RunStore(run_dir.parent.parent)
    rec = store.load(run_dir.name)
    if "series.csv" not in rec.artifacts:
        raise UsageError(f"{run_dir} is not an ensemble run")
    thresholds = json.loads(store.read_artifact(rec.run_id, "thresholds.json")) if "thresholds.json" in rec.artifacts else {}
    md, plot = render_report(rec.manifest, store.read_artifact(rec.run_id, "series.csv"), thresholds)
    if out:
        dest = Path(out)
        dest.mkdir(parents=True, exist_ok=True)
        (dest / f"{rec.run_id}_report.md").write_text(md, encoding="utf-8")
        (dest / f"{rec.run_id}_plot.csv").write_text(plot, encoding="utf-8")
    return md


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (YAML)")
    common.add_argument("--seed", type=int, help="override ensemble.base_seed")
    common.add_argument("--out", help="store root / output directory")
    common.add_argument("--paths", type=int, help="override ensemble.m_paths")
    common.add_argument("--quiet", action="store_true")

    p = _Parser(prog="spde-lab", description="Blowup experiments for stochastic heat equations.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="simulate one path")
    sub.add_parser("ensemble", parents=[common], help="run a Monte Carlo ensemble")
    sub.add_parser("thresholds", parents=[common], help="evaluate theory oracles")
    v = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    v.add_argument("suite", nargs="?", default="all", help="all, quick, or comma-separated criterion numbers")
    r = sub.add_parser("report", parents=[common], help="summarise a stored run")
    r.add_argument("run_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.quiet)
        if args.command == "report":
            _say(args, cmd_report(args.run_dir, args.out))
            return EXIT_OK
        cfg = _config(args)
        if args.command == "thresholds":
            text = json.dumps(cmd_thresholds(cfg), indent=2, sort_keys=True)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "thresholds.json").write_text(text, encoding="utf-8")
            _say(args, text)
            return EXIT_OK
        store = _store(args, cfg)
        run_id = cmd_simulate(cfg, store) if args.command == "simulate" else cmd_ensemble(cfg, store)
        _say(args, store.run_dir(run_id))
        return EXIT_OK
    except (UsageError, ConfigError, KeyError, FileNotFoundError, IntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
