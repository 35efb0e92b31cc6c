"""
``nlgrad`` command line: run one experiment from a JSON config and write a report.

    nlgrad --config configs/witness_limit_const.json --out out/ [--seed N] [--deterministic]

Exit codes: 0 all assertions pass, 1 an assertion failed, 2 invalid config,
3 numerical non-convergence (the report is still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import config as C
from .equivalence import sandwich_check
from .errors import ConfigurationError, DomainError, NumericalError, ResolutionError
from .fieldio import read_csv, write_field
from .grid import DomainGrid, ScalarField
from .nlops import adjoint_audit, nltv_dual_check
from .solver import FidelityTerm, VariationalProblem, certificate_radius, solve, uniqueness_probe
from .triviality import GrowthExperiment, doubling_schedule, growth_scan, test_function_criterion
from .weight import classify_embeddings
from .witness import ExperimentTable, lp_scaling_check, witness_limit_experiment

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

CLAIMS = {
    "denoise": "existence of minimizers: nonlocal regularizer plus fidelity",
    "deblur": "existence of minimizers: nonlocal regularizer plus blur fidelity",
    "diagnose-weight": "embedding diagnostic: weight lower bound and f_p integrability",
    "witness-limit": "necessity of f_p bounds: witness seminorm limit 2 f_p(x0)",
    "lp-scaling": "witness L^p norm scales like eps^p",
    "sandwich": "constant-weight seminorm sandwiched by the affine-reduced seminorm",
    "dual-check": "dual representation of nonlocal total variation",
    "growth-scan": "triviality on infinite-measure domains for weights bounded below",
    "testfn-criterion": "smooth compactly supported functions versus int_K f_p",
    "adjoint-audit": "nonlocal divergence is the negative adjoint of the nonlocal gradient",
}

# gnuplot columns per table layout
PLOT_COLUMNS = {
    ("eps", "grid_n", "value", "target", "rel_gap"): ("eps", "value", "target"),
    ("L", "measure", "seminorm_pow", "ratio"): ("measure", "seminorm_pow"),
    ("eps", "grid_n", "lp_norm_pow"): ("log_eps", "log_value"),
}


class Outcome:
    def __init__(self):
        self.results: dict = {}
        self.assertions: dict = {}
        self.residuals: dict = {}
        self.tables: dict[str, ExperimentTable] = {}
        self.fields: dict[str, ScalarField] = {}
        self.numerical_failure: str | None = None


def workers_from_env(deterministic: bool) -> int:
    if deterministic:
        return 1
    try:
        return max(1, int(os.environ.get("NLGRAD_THREADS", "1")))
    except ValueError:
        raise ConfigurationError("NLGRAD_THREADS must be an integer") from None


def emit_plotdata(table: ExperimentTable, path: str | Path) -> Path:
    """Whitespace-separated columns for gnuplot; the column choice follows the table layout."""
    path = Path(path)
    cols = PLOT_COLUMNS.get(tuple(table.columns), tuple(table.columns))
    if cols == ("log_eps", "log_value"):
        data = np.column_stack([np.log(table.column("eps")), np.log(table.column("lp_norm_pow"))])
    else:
        data = np.column_stack([table.column(c) for c in cols])
    lines = ["# " + " ".join(cols)] + [" ".join(repr(float(v)) for v in row) for row in data]
    path.write_text("\n".join(lines) + "\n")
    return path


# commands --------------------------------------------------------------------


def _run_solve(cfg: C.DenoiseConfig, rng, workers, base) -> Outcome:
    out = Outcome()
    grid = cfg.grid.build()
    weight = cfg.weight.build(grid, base)
    g = C.build_data(cfg.fidelity.data, grid, rng, base)
    if cfg.command == "deblur":
        fid = FidelityTerm.deblur(cfg.fidelity.lam, g, np.asarray(cfg.fidelity.kernel, dtype=float))
    else:
        fid = FidelityTerm.lq(cfg.fidelity.lam, g, cfg.fidelity.q)
    prob = VariationalProblem(
        weight, cfg.p, fid, cfg.mask.build(), cfg.solver.max_iters, cfg.solver.tol, cfg.solver.safety
    )
    out.fields["data"] = g
    try:
        res = solve(prob)
    except NumericalError as exc:
        res = exc.best
        out.numerical_failure = str(exc)
    out.fields["minimizer"] = res.minimizer
    out.results.update(res.to_dict())
    cert = res.certificate
    out.residuals["certificate"] = cert["value"]
    out.assertions["certificate_below_tol"] = bool(cert["value"] < cert["tol"])
    if cfg.expect_identity:
        dev = float(np.max(np.abs(res.minimizer.flat - g.flat)))
        out.residuals["max_abs_minimizer_minus_data"] = dev
        out.assertions["minimizer_equals_data"] = bool(dev <= 1e-9)
    if cfg.uniqueness_starts and out.numerical_failure is None:
        try:
            dist, runs = uniqueness_probe(prob, cfg.uniqueness_starts, rng, workers)
            out.results["uniqueness_probe"] = dist
            out.residuals["uniqueness_probe"] = dist
            radii = [certificate_radius(prob, r.certificate) for r in runs]
            if all(r is not None for r in radii):
                # two solutions each within r of the minimizer: distance <= 2 max r
                bound = 10.0 * 2.0 * max(radii)
                out.results["uniqueness_bound"] = bound
                out.assertions["unique_minimizer"] = bool(dist <= bound)
        except NumericalError as exc:
            out.numerical_failure = str(exc)
    return out


def _run_diagnose(cfg: C.DiagnoseConfig, rng, workers, base) -> Outcome:
    out = Outcome()
    grid = cfg.grid.build()
    diag = classify_embeddings(cfg.weight.build(grid, base), grid, cfg.p, cfg.K)
    out.results.update(diag.to_dict())
    out.fields["f_p"] = diag.f_p_values
    out.residuals.update({f"ratio_{k}": v for k, v in diag.ratios.items()})
    for key, want in cfg.expect.items():
        if not hasattr(diag, key):
            raise ConfigurationError(f"expect.{key}: unknown diagnostic")
        out.assertions[f"{key}_is_{str(want).lower()}"] = bool(getattr(diag, key) == want)
    return out


def _run_witness(cfg: C.WitnessConfig, rng, workers, base) -> Outcome:
    out = Outcome()
    for p in cfg.p:
        grid = DomainGrid.on_box(cfg.lower, cfg.upper, [8] * len(cfg.lower))
        weight = cfg.weight.build(grid, base)
        target = 2.0 * grid.measure if cfg.target == "two_measure" else None
        table = witness_limit_experiment(
            weight, cfg.x0, p, cfg.eps_schedule, cfg.cells_per_eps, cfg.lower, cfg.upper, target, workers
        )
        tag = f"p{p:g}"
        out.tables[f"witness_{tag}"] = table
        out.results[tag] = table.summary
        out.residuals[f"final_rel_gap_{tag}"] = table.summary["final_rel_gap"]
        out.assertions[f"within_tolerance_{tag}"] = bool(table.summary["final_rel_gap"] <= cfg.tolerance)
        out.assertions[f"monotone_tail_{tag}"] = table.summary["monotone_tail"]
    return out


def _run_lp(cfg: C.LpScalingConfig, rng, workers, base) -> Outcome:
    out = Outcome()
    for p in cfg.p:
        table = lp_scaling_check(cfg.x0, p, cfg.eps_schedule, cfg.cells_per_eps, workers=workers)
        tag = f"p{p:g}"
        out.tables[f"lp_scaling_{tag}"] = table
        out.results[tag] = table.summary
        out.residuals[f"slope_error_{tag}"] = table.summary["slope_error"]
        out.assertions[f"slope_{tag}"] = bool(table.summary["slope_error"] <= cfg.tolerance)
    return out


def _sandwich_fields(cfg: C.SandwichConfig, rng, base) -> list[tuple[str, ScalarField]]:
    if cfg.batch_dir is not None:
        folder = C._resolve(cfg.batch_dir, base)
        if not folder.is_dir():
            raise ConfigurationError(f"batch_dir: {folder} is not a directory")
        grid = cfg.grid.build() if cfg.grid is not None else None
        return [(f.name, read_csv(f, grid)) for f in sorted(folder.glob("*.csv"))]
    grid = cfg.grid.build()
    return [(f"random_{k}", ScalarField(grid, rng.standard_normal(grid.n))) for k in range(cfg.count)]


def _run_sandwich(cfg: C.SandwichConfig, rng, workers, base) -> Outcome:
    out = Outcome()
    fields = _sandwich_fields(cfg, rng, base)
    for p in cfg.p:
        reports = [(name, sandwich_check(u, p, cfg.slack)) for name, u in fields]
        tag = f"p{p:g}"
        failed = [name for name, r in reports if not r.ok]
        worst = max((max(r.lower - r.middle, r.middle - r.upper) / max(1.0, abs(r.middle)) for _, r in reports), default=0.0)
        out.results[tag] = {"cases": len(reports), "failed": failed}
        out.residuals[f"worst_violation_{tag}"] = float(worst)
        out.assertions[f"sandwich_{tag}"] = not failed
        if p == 1:
            out.assertions["nltv_form_p1"] = all(r.nltv_form_ok for _, r in reports)
    return out


def _run_dual(cfg: C.DualCheckConfig, rng, workers, base) -> Outcome:
    out = Outcome()
    grid = cfg.grid.build()
    weight = cfg.weight.build(grid, base)
    reps = []
    for _ in range(cfg.fields):
        u = ScalarField(grid, rng.standard_normal(grid.n))
        reps.append(nltv_dual_check(u, weight, cfg.trials, rng).to_dict())
    out.results["fields"] = reps
    out.residuals["max_relative_attainment_error"] = max(
        abs(r["maximizer_value"] - r["formula"]) / max(abs(r["formula"]), 1e-300) for r in reps
    )
    out.assertions["maximizer_attains_formula"] = all(r["attained"] for r in reps)
    out.assertions["feasible_never_exceed"] = all(r["never_exceeded"] for r in reps)
    return out


def _run_growth(cfg: C.GrowthConfig, rng, workers, base) -> Outcome:
    out = Outcome()
    exp = GrowthExperiment(cfg.weight.build(None, base), tuple(cfg.lengths), cfg.h, cfg.center, cfg.radius, cfg.profile)
    table = growth_scan(exp, cfg.p, workers)
    out.tables["growth"] = table
    out.results.update(table.summary)
    out.residuals["tail_ratio_spread"] = table.summary["tail_ratio_spread"]
    if cfg.profile == "affine":
        out.assertions["affine_control_zero"] = table.summary["all_zero"]
    else:
        out.assertions["linear_growth"] = table.summary["linear_growth"]
        out.assertions["slope_at_least_half_far_rate"] = table.summary["slope_ok"]
    return out


def _run_testfn(cfg: C.CriterionConfig, rng, workers, base) -> Outcome:
    out = Outcome()
    rep = test_function_criterion(
        cfg.weight.build(None, base), cfg.K, doubling_schedule(cfg.h, cfg.lengths), cfg.p, workers
    )
    out.tables["criterion"] = rep.pop("table")
    out.results.update(rep)
    out.residuals["integral_ratio"] = rep["integral_ratio"]
    out.assertions["lockstep"] = rep["lockstep"]
    if cfg.expect_trivial is not None:
        out.assertions["prediction_matches_expectation"] = bool(rep["predicted_trivial"] == cfg.expect_trivial)
    return out


def _run_adjoint(cfg: C.AdjointConfig, rng, workers, base) -> Outcome:
    out = Outcome()
    rep = adjoint_audit([g.build() for g in cfg.grids], cfg.trials, rng)
    out.results["trials"] = rep["trials"]
    out.residuals["max_relative_residual"] = rep["max_relative_residual"]
    out.assertions["adjoint_within_tolerance"] = bool(rep["max_relative_residual"] <= cfg.tolerance)
    return out


RUNNERS = {
    "denoise": _run_solve,
    "deblur": _run_solve,
    "diagnose-weight": _run_diagnose,
    "witness-limit": _run_witness,
    "lp-scaling": _run_lp,
    "sandwich": _run_sandwich,
    "dual-check": _run_dual,
    "growth-scan": _run_growth,
    "testfn-criterion": _run_testfn,
    "adjoint-audit": _run_adjoint,
}


# driver ----------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, ScalarField):
        return None
    return obj


def write_outputs(cfg, outcome: Outcome, out_dir: Path, deterministic: bool) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for name, u in outcome.fields.items():
        files.append(write_field(u, out_dir / name).name)
    for name, table in outcome.tables.items():
        (out_dir / f"{name}.csv").write_text(table.to_csv())
        emit_plotdata(table, out_dir / f"{name}.dat")
        files += [f"{name}.csv", f"{name}.dat"]
    passed = bool(outcome.numerical_failure is None and all(outcome.assertions.values()))
    report = {
        "command": cfg.command,
        "claim": CLAIMS[cfg.command],
        "config": cfg.model_dump(mode="json", by_alias=True),
        "seed": cfg.seed,
        "deterministic": deterministic,
        "assertions": outcome.assertions,
        "pass": passed,
        "residuals": outcome.residuals,
        "results": outcome.results,
        "numerical_failure": outcome.numerical_failure,
        "files": sorted(files),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    report = _jsonable(report)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def load_config(path: str | Path, seed: int | None = None):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"<root>: invalid JSON ({exc})") from None
    if seed is not None and isinstance(doc, dict):
        doc["seed"] = seed
    return C.parse_config(doc)


def run(config_path: str | Path, out: str | Path | None = None, seed: int | None = None, deterministic: bool = False):
    """Run one config; returns ``(exit_code, report or None)``."""
    try:
        cfg = load_config(config_path, seed)
        workers = workers_from_env(deterministic)
        base = Path(config_path).resolve().parent
        rng = np.random.default_rng(cfg.seed)
        out_dir = Path(out) if out is not None else Path(cfg.out or f"out/{cfg.command}")
        outcome = RUNNERS[cfg.command](cfg, rng, workers, base)
    except (ConfigurationError, DomainError, ResolutionError) as exc:
        print(f"nlgrad: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    report = write_outputs(cfg, outcome, out_dir, deterministic)
    if outcome.numerical_failure is not None:
        print(f"nlgrad: did not converge: {outcome.numerical_failure}", file=sys.stderr)
        return EXIT_NUMERICAL, report
    for name, ok in report["assertions"].items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return (EXIT_OK if report["pass"] else EXIT_FAILED), report


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nlgrad", description="Nonlocal gradient experiments from JSON configs.")
    ap.add_argument("--config", required=True, help="experiment config (JSON)")
    ap.add_argument("--out", help="output directory (default: config 'out' or out/<command>)")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--deterministic", action="store_true", help="sequential execution, bitwise-reproducible reports")
    args = ap.parse_args(argv)
    code, _ = run(args.config, args.out, args.seed, args.deterministic)
    return code


if __name__ == "__main__":
    sys.exit(main())
