"""Command line orchestrator: runs experiments from JSON configs.

Each run writes a UTC-timestamped directory containing the echoed config,
a manifest with version and hash metadata, plot-ready CSV files and a JSON
summary.  Outputs are pure functions of the config contents (plus the seed
override), so re-running the echoed config reproduces every CSV byte for
byte; the thread count only changes wall time.

Exit codes: 0 success, 1 failed acceptance gate (with --check) or failed
diagnostic/invariant check, 2 configuration error, 3 excessive divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from burgerslab import __version__
from burgerslab.config import (
    ConfigError,
    EXPERIMENT_KINDS,
    ExperimentConfig,
    load_config,
    parse_covariance,
    parse_functional,
    parse_sim,
)
from burgerslab.covariance import (
    DiagonalCovariance,
    kl_truncate,
    op_norm,
    trace,
)
from burgerslab.diagnostics import (
    check_exp_bound_Y,
    check_linf_scaling_Y,
    check_moment_bound_X,
    check_ou_sharpness,
    check_stoch_conv_moment,
    run_invariant_suite,
)
from burgerslab.error_lab import (
    DivergenceRateError,
    galerkin_rate_experiment,
    kl_rate_experiment,
    strong_error,
    weak_error,
)

RATE_CSV_COLUMNS = (
    "experiment_id", "mode", "N_or_M", "scale", "estimate", "std_error",
    "bound_rhs", "ratio", "n_reps", "seed", "dt", "T",
)

_DESCRIPTIONS = {
    "kl_rate": (
        "Karhunen-Loeve truncation sweep: simulates X^Q and X^{Q_N} for each N\n"
        "with shared Brownian increments and fits log(error) against\n"
        "log(q_{N+1}).  Theoretical targets: the strong error is\n"
        "O(sqrt(q_{N+1})) and the weak error is O(q_{N+1}), so the expected\n"
        "slopes are about 1/2 (strong) and about 1 (weak); the measured weak\n"
        "slope should be roughly twice the strong one.\n"
        "Required keys: experiment, seed, sim{M,T,dt,...}, covariance, Ns,\n"
        "mode (strong|weak|both), n_reps.  Optional: r, phi, alpha_strong,\n"
        "alpha_weak, chunk_size, gates, K."
    ),
    "galerkin_rate": (
        "Spectral Galerkin refinement sweep: simulates X_M for each M against\n"
        "the reference X_{M_ref} under the same noise and fits log(error)\n"
        "against log(M).  Theoretical targets: strong errors decay like\n"
        "M^-alpha and weak errors like M^-2alpha with alpha up to 1, so the\n"
        "fitted slopes are negative, with the weak slope roughly twice the\n"
        "strong one.\n"
        "Required keys: experiment, seed, sim, covariance, Ms, M_ref, mode,\n"
        "n_reps.  Optional: r, phi, alpha_strong, alpha_weak, chunk_size,\n"
        "gates."
    ),
    "perturbation_pair": (
        "Single covariance pair: estimates the strong error\n"
        "sup_t ||X^{Q1} - X^{Q2}|| and the weak error |E phi(X^{Q1}(T)) -\n"
        "E phi(X^{Q2}(T))| under coupled noise, next to the weighted\n"
        "operator-norm bound values.\n"
        "Required keys: experiment, seed, sim, covariance, covariance2,\n"
        "n_reps.  Optional: r, phi, crn, alphas, chunk_size, gates."
    ),
    "diagnostics": (
        "Monte Carlo checks of the analytic estimates: the exponential energy\n"
        "bound for the stochastic convolution, the p-th moment energy bound\n"
        "with its explicit growth factor, the theta-scaling of convolution\n"
        "moments and sup-norms, and the exact Ito-isometry oracle for coupled\n"
        "convolution distances.  Exit code is nonzero iff any check fails.\n"
        "Required keys: experiment, seed, sim, covariance, n_reps.\n"
        "Optional: checks (sub-list), params, gates."
    ),
    "invariants": (
        "Deterministic identity suite over randomized fields: transport-term\n"
        "energy cancellation, bilinear skew identity, Poincare inequality,\n"
        "semigroup smoothing with its explicit constant, sup-norm embedding,\n"
        "transform roundtrips, fast-versus-reference operator agreement and\n"
        "fractional power composition.  Exit code is nonzero iff any check\n"
        "fails.  Required keys: experiment, seed.  Optional: cases, Ms."
    ),
}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def _write_csv(path: Path, columns, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


def _report_dict(report) -> dict:
    d = asdict(report)
    d["metadata"] = {k: v for k, v in d["metadata"].items()}
    return json.loads(json.dumps(d, default=float))


def _fit_dict(fit) -> dict | None:
    return None if fit is None else json.loads(json.dumps(asdict(fit), default=float))


def _window_ok(value, window) -> bool:
    return window[0] <= value <= window[1]


def _evaluate_gates(gates: dict | None, summary: dict) -> tuple[bool, dict]:
    if not gates:
        return True, {}
    results = {}
    ok = True
    for key in ("strong_slope", "weak_slope"):
        if key in gates:
            fit = summary.get(key.replace("_slope", "_fit"))
            val = None if fit is None else fit["slope"]
            passed = val is not None and _window_ok(val, gates[key])
            results[key] = {"window": gates[key], "value": val, "passed": passed}
            ok &= passed
    if "weak_over_strong" in gates:
        val = summary.get("weak_over_strong")
        passed = val is not None and _window_ok(val, gates["weak_over_strong"])
        results["weak_over_strong"] = {
            "window": gates["weak_over_strong"], "value": val, "passed": passed,
        }
        ok &= passed
    if gates.get("require_satisfied") or gates.get("require_pass"):
        passed = bool(summary.get("all_passed", False))
        results["require_pass"] = {"passed": passed}
        ok &= passed
    return ok, results


def _rate_rows(experiment_id, axis, scales, strong_reports, weak_reports, seed, sim):
    rows = []
    for mode, reports in (("strong", strong_reports), ("weak", weak_reports)):
        for value, scale in zip(axis, scales):
            rep = reports.get(value)
            if rep is None:
                continue
            rows.append({
                "experiment_id": experiment_id,
                "mode": mode,
                "N_or_M": value,
                "scale": float(scale),
                "estimate": rep.estimate,
                "std_error": rep.std_error,
                "bound_rhs": rep.bound_rhs,
                "ratio": rep.ratio,
                "n_reps": rep.n_samples,
                "seed": seed,
                "dt": sim.dt,
                "T": sim.final_time,
            })
    return rows


def _run_kl_rate(cfg: ExperimentConfig, seed: int, threads: int):
    raw = cfg.raw
    sim = parse_sim(raw["sim"])
    q = parse_covariance(raw["covariance"], k_max=raw.get("K"), base_dir=cfg.base_dir)
    if not isinstance(q, DiagonalCovariance):
        raise ConfigError("kl_rate needs a covariance diagonal in the sine basis")
    phi = parse_functional(raw["phi"]) if "phi" in raw else None
    result = kl_rate_experiment(
        q, raw["Ns"], sim, raw["mode"], raw["n_reps"], seed,
        r=float(raw.get("r", 2)), phi=phi,
        alpha_strong=float(raw.get("alpha_strong", 0.98)),
        alpha_weak=float(raw.get("alpha_weak", 0.99)),
        chunk_size=int(raw.get("chunk_size", 512)), threads=threads,
    )
    summary = {
        "experiment_id": "kl_rate",
        "strong_fit": _fit_dict(result.strong_fit),
        "weak_fit": _fit_dict(result.weak_fit),
        "weak_over_strong": (
            result.weak_fit.slope / result.strong_fit.slope
            if result.weak_fit and result.strong_fit and result.strong_fit.slope != 0
            else None
        ),
        "reports": {
            "strong": {str(n): _report_dict(r) for n, r in result.strong_reports.items()},
            "weak": {str(n): _report_dict(r) for n, r in result.weak_reports.items()},
        },
    }
    rows = _rate_rows("kl_rate", result.ns, result.scales,
                      result.strong_reports, result.weak_reports, seed, sim)
    return rows, summary


def _run_galerkin_rate(cfg: ExperimentConfig, seed: int, threads: int):
    raw = cfg.raw
    sim = parse_sim(raw["sim"])
    q = parse_covariance(raw["covariance"], k_max=raw["M_ref"], base_dir=cfg.base_dir)
    phi = parse_functional(raw["phi"]) if "phi" in raw else None

    result = galerkin_rate_experiment(
        q, raw["Ms"], raw["M_ref"], sim, raw["mode"], raw["n_reps"], seed,
        r=float(raw.get("r", 2)), phi=phi,
        alpha_strong=float(raw.get("alpha_strong", 0.98)),
        alpha_weak=float(raw.get("alpha_weak", 0.99)),
        chunk_size=int(raw.get("chunk_size", 256)), threads=threads,
    )

    summary = {
        "experiment_id": "galerkin_rate",
        "m_ref": result.m_ref,
        "strong_fit": _fit_dict(result.strong_fit),
        "weak_fit": _fit_dict(result.weak_fit),
        "weak_over_strong": (
            result.weak_fit.slope / result.strong_fit.slope
            if result.weak_fit and result.strong_fit and result.strong_fit.slope != 0
            else None
        ),
        "reports": {
            "strong": {str(m): _report_dict(r) for m, r in result.strong_reports.items()},
            "weak": {str(m): _report_dict(r) for m, r in result.weak_reports.items()},
        },
    }
    rows = _rate_rows("galerkin_rate", result.ms, result.ms,
                      result.strong_reports, result.weak_reports, seed, sim)
    return rows, summary


def _run_perturbation_pair(cfg: ExperimentConfig, seed: int, threads: int):
    raw = cfg.raw
    sim = parse_sim(raw["sim"])
    q1 = parse_covariance(raw["covariance"], base_dir=cfg.base_dir)
    q2 = parse_covariance(raw["covariance2"], base_dir=cfg.base_dir)
    chunk = int(raw.get("chunk_size", 512))
    strong = strong_error(
        q1, q2, sim, float(raw.get("r", 2)), raw["n_reps"], seed,
        alpha=float(raw.get("alpha_strong", 0.98)), chunk_size=chunk, threads=threads,
    )
    rows = [{
        "experiment_id": "perturbation_pair", "mode": "strong", "N_or_M": None,
        "scale": strong.bound_rhs, "estimate": strong.estimate,
        "std_error": strong.std_error, "bound_rhs": strong.bound_rhs,
        "ratio": strong.ratio, "n_reps": strong.n_samples, "seed": seed,
        "dt": sim.dt, "T": sim.final_time,
    }]
    summary = {"experiment_id": "perturbation_pair",
               "strong": _report_dict(strong)}
    if "phi" in raw:
        weak = weak_error(
            q1, q2, parse_functional(raw["phi"]), sim, raw["n_reps"], seed,
            alpha=float(raw.get("alpha_weak", 0.99)), crn=bool(raw.get("crn", True)),
            chunk_size=chunk, threads=threads,
        )
        rows.append({
            "experiment_id": "perturbation_pair", "mode": "weak", "N_or_M": None,
            "scale": weak.bound_rhs, "estimate": weak.estimate,
            "std_error": weak.std_error, "bound_rhs": weak.bound_rhs,
            "ratio": weak.ratio, "n_reps": weak.n_samples, "seed": seed,
            "dt": sim.dt, "T": sim.final_time,
        })
        summary["weak"] = _report_dict(weak)
    return rows, summary


def _run_diagnostics(cfg: ExperimentConfig, seed: int, threads: int):
    raw = cfg.raw
    sim = parse_sim(raw["sim"])
    q = parse_covariance(raw["covariance"], base_dir=cfg.base_dir)
    if not isinstance(q, DiagonalCovariance):
        raise ConfigError("diagnostics needs a covariance diagonal in the sine basis")
    n_reps = raw["n_reps"]
    checks = raw.get("checks", ["exp_bound", "moment_bound", "conv_moment",
                                "linf_scaling", "ou_sharpness"])
    params = raw.get("params", {})
    results = []
    if "exp_bound" in checks:
        frac = float(params.get("alpha_over_limit", 0.5))
        alpha = frac / (2.0 * op_norm(q))
        results.append(check_exp_bound_Y(q, alpha, sim, n_reps, seed))
    if "moment_bound" in checks:
        results.append(check_moment_bound_X(q, float(params.get("p", 4)), sim,
                                            n_reps, seed))
    if "conv_moment" in checks:
        results.append(check_stoch_conv_moment(
            q, float(params.get("conv_alpha", 0.25)), float(params.get("conv_p", 2)),
            sim, n_reps, seed))
    if "linf_scaling" in checks:
        results.append(check_linf_scaling_Y(q, float(params.get("linf_p", 2)),
                                            sim, n_reps, seed))
    if "ou_sharpness" in checks:
        n_half = max(1, q.truncation // 2)
        q2 = kl_truncate(q, n_half)
        t = float(params.get("sharpness_t", sim.final_time))
        results.append(check_ou_sharpness(q, q2, t, sim, n_reps, seed))
    for r in results:
        status = "pass" if r.satisfied else "FAIL"
        print(f"{status}  {r.name:20s} [{r.kind}] lhs={r.lhs_estimate:.6g} "
              f"(se {r.lhs_std_error:.2g}) rhs={r.rhs_value:.6g}")
    rows = [{
        "check": r.name, "kind": r.kind, "lhs_estimate": r.lhs_estimate,
        "lhs_std_error": r.lhs_std_error, "rhs_value": r.rhs_value,
        "satisfied": r.satisfied, "seed": seed,
    } for r in results]
    summary = {
        "experiment_id": "diagnostics",
        "checks": [json.loads(json.dumps(asdict(r), default=float)) for r in results],
        "all_passed": all(r.satisfied for r in results),
        "trace_q": trace(q),
    }
    return rows, summary


def _run_invariants(cfg: ExperimentConfig, seed: int, threads: int):
    raw = cfg.raw
    report = run_invariant_suite(seed, cases=int(raw.get("cases", 100)),
                                 truncations=tuple(raw.get("Ms", [8, 64, 256])))
    rows = [{
        "check": c.name, "kind": "identity", "lhs_estimate": c.worst,
        "lhs_std_error": 0.0, "rhs_value": 1.0, "satisfied": c.passed,
        "seed": seed,
    } for c in report.checks]
    summary = {
        "experiment_id": "invariants",
        "checks": [asdict(c) for c in report.checks],
        "all_passed": report.passed,
    }
    for line in report.summary_lines():
        print(line)
    return rows, summary


_RUNNERS = {
    "kl_rate": _run_kl_rate,
    "galerkin_rate": _run_galerkin_rate,
    "perturbation_pair": _run_perturbation_pair,
    "diagnostics": _run_diagnostics,
    "invariants": _run_invariants,
}


def run_experiment(cfg: ExperimentConfig, out_dir: Path, threads: int = 1,
                   check: bool = False, seed_override: int | None = None) -> int:
    """Execute a validated config and write its artifacts; returns exit code."""
    seed = cfg.seed if seed_override is None else seed_override
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    run_dir = Path(out_dir) / f"{cfg.experiment}-{stamp}"
    run_dir.mkdir(parents=True, exist_ok=False)

    config_text = json.dumps(cfg.raw, indent=2, sort_keys=True)
    try:
        rows, summary = _RUNNERS[cfg.experiment](cfg, seed, threads)
    except DivergenceRateError as exc:
        (run_dir / "error.txt").write_text(str(exc) + "\n", encoding="utf-8")
        print(f"error: {exc}", file=sys.stderr)
        return 3

    gates_ok, gate_results = _evaluate_gates(cfg.raw.get("gates"), summary)
    summary["gates"] = gate_results
    summary["seed_used"] = seed

    (run_dir / "config.json").write_text(config_text + "\n", encoding="utf-8")
    manifest = {
        "experiment": cfg.experiment,
        "seed_used": seed,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "created_utc": stamp,
        "threads": threads,
        "versions": {
            "burgerslab": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "numba": __import__("numba").__version__,
            "python": sys.version.split()[0],
        },
        "note": "re-run with: burgerslab run --config config.json "
                "(outputs depend only on config contents and the seed override)",
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if cfg.experiment in ("diagnostics", "invariants"):
        _write_csv(run_dir / "checks.csv",
                   ("check", "kind", "lhs_estimate", "lhs_std_error", "rhs_value",
                    "satisfied", "seed"), rows)
    else:
        _write_csv(run_dir / "results.csv", RATE_CSV_COLUMNS, rows)
    (run_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n",
        encoding="utf-8")
    print(f"run directory: {run_dir}")

    if cfg.experiment in ("diagnostics", "invariants") and not summary["all_passed"]:
        return 1
    if check and not gates_ok:
        print("acceptance gates failed:", json.dumps(gate_results, sort_keys=True),
              file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="burgerslab",
        description="Noise-covariance perturbation experiments for the 1D "
                    "stochastic Burgers equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("--config", required=True, help="path to the JSON config")
    p_run.add_argument("--out", default="runs", help="parent directory for run outputs")
    p_run.add_argument("--threads", type=int, default=1,
                       help="worker threads (never changes results)")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--check", action="store_true",
                       help="enforce the config's acceptance gates")
    sub.add_parser("list-experiments", help="list the experiment kinds")
    p_desc = sub.add_parser("describe", help="describe one experiment kind")
    p_desc.add_argument("kind")

    args = parser.parse_args(argv)

    if args.command == "list-experiments":
        for kind in EXPERIMENT_KINDS:
            print(f"{kind}: {_DESCRIPTIONS[kind].splitlines()[0]}")
        return 0
    if args.command == "describe":
        if args.kind not in EXPERIMENT_KINDS:
            print(f"unknown experiment kind {args.kind!r}; "
                  f"known: {', '.join(EXPERIMENT_KINDS)}", file=sys.stderr)
            return 2
        print(_DESCRIPTIONS[args.kind])
        return 0

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run_experiment(cfg, Path(args.out), threads=args.threads,
                              check=args.check, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
