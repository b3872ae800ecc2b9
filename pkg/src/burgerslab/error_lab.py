"""Monte Carlo estimation of covariance-perturbation errors and rate fits.

Strong errors couple two trajectories through the shared keyed noise and
estimate the r-th moment of sup_{t <= T} ||X1(t) - X2(t)||_L2 on the step
grid.  Weak errors are common-random-numbers estimates of
|E phi(X1(T)) - E phi(X2(T))| for a smooth bounded test functional phi.
Each estimate is reported next to the operator-norm quantity the
perturbation theory bounds it with:

    strong:  ||(-A)^(-alpha/2) |Q1^(1/2) - Q2^(1/2)|||_S2   (alpha = 0.98)
    weak:    ||(-A)^-alpha (Q1 - Q2)||_S1                   (alpha = 0.99)

The weight exponents sit just below the theoretical suprema 1^- and 1/2^-
(in the respective conventions), since the bounds hold for every exponent
strictly below them.  The unknown constants are never estimated; instead
the experiments fit log-log slopes against the truncation scale and check
that estimate/bound ratios stay stable across a sweep.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from burgerslab.covariance import (
    Covariance,
    DecayLaw,
    DiagonalCovariance,
    kl_truncate,
    weighted_hs_sqrt_distance,
    weighted_trace_distance,
)
from burgerslab.dynamics import (
    CoupledRun,
    SimConfig,
    SupPairDistance,
    run_coupled,
    run_galerkin,
)

__all__ = [
    "ALPHA_WEAK",
    "ALPHA_STRONG",
    "CosineMode",
    "GaussianNorm",
    "LinearBounded",
    "TestFunctional",
    "functional_from_config",
    "functional_to_config",
    "ErrorReport",
    "RateFit",
    "DivergenceRateError",
    "strong_error",
    "weak_error",
    "rate_fit",
    "kl_rate_experiment",
    "galerkin_rate_experiment",
    "KlRateResult",
    "GalerkinRateResult",
]

# weight exponents of the bound right-hand sides, fixed just below the
# theoretical suprema (see module docstring)
ALPHA_WEAK = 0.99
ALPHA_STRONG = 0.98

MAX_DIVERGENCE_FRACTION = 0.01


class DivergenceRateError(RuntimeError):
    """More than the tolerated fraction of replications blew up."""

    def __init__(self, n_diverged: int, n_total: int):
        super().__init__(
            f"{n_diverged} of {n_total} replications diverged "
            f"(> {MAX_DIVERGENCE_FRACTION:.0%} invalidates the run)"
        )
        self.n_diverged = n_diverged
        self.n_total = n_total


# ---------------------------------------------------------------------------
# test functionals (all twice differentiable with bounded derivatives)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CosineMode:
    """phi(x) = cos(<x, h_k>); |phi'| <= 1 and |phi''| <= 1."""

    k: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("mode index must be >= 1")

    def __call__(self, states: np.ndarray) -> np.ndarray:
        if self.k > states.shape[-1]:
            raise ValueError(
                f"functional mode {self.k} exceeds the truncation {states.shape[-1]}"
            )
        return np.cos(states[..., self.k - 1])


@dataclass(frozen=True)
class GaussianNorm:
    """phi(x) = exp(-a ||x||^2); derivatives bounded by 2a and 2a + 4a^2 scales."""

    a: float = 1.0

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("a must be > 0")

    def __call__(self, states: np.ndarray) -> np.ndarray:
        return np.exp(-self.a * np.einsum("...k,...k->...", states, states))


@dataclass(frozen=True)
class LinearBounded:
    """phi(x) = tanh(<x, h_k>); |phi'| <= 1, |phi''| <= 0.77."""

    k: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("mode index must be >= 1")

    def __call__(self, states: np.ndarray) -> np.ndarray:
        if self.k > states.shape[-1]:
            raise ValueError(
                f"functional mode {self.k} exceeds the truncation {states.shape[-1]}"
            )
        return np.tanh(states[..., self.k - 1])


TestFunctional = CosineMode | GaussianNorm | LinearBounded


def functional_to_config(phi: TestFunctional) -> dict:
    if isinstance(phi, CosineMode):
        return {"kind": "cosine_mode", "k": phi.k}
    if isinstance(phi, GaussianNorm):
        return {"kind": "gaussian_norm", "a": phi.a}
    return {"kind": "linear_bounded", "k": phi.k}


def functional_from_config(spec: dict) -> TestFunctional:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("functional config must be a mapping with a 'kind' key")
    kind = spec["kind"]
    if kind == "cosine_mode":
        return CosineMode(k=int(spec.get("k", 1)))
    if kind == "gaussian_norm":
        return GaussianNorm(a=float(spec.get("a", 1.0)))
    if kind == "linear_bounded":
        return LinearBounded(k=int(spec.get("k", 1)))
    raise ValueError(f"unknown functional kind {kind!r}")


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class ErrorReport:
    """One Monte Carlo error estimate next to its theoretical bound value."""

    estimate: float
    std_error: float
    n_samples: int
    bound_rhs: float
    ratio: float
    r: float | None = None
    n_excluded: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("an error report needs at least 2 samples")
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")


@dataclass
class RateFit:
    """Least-squares line through (log scale, log error) points."""

    slope: float
    intercept: float
    r_squared: float
    points: list[tuple[float, float]]


def rate_fit(points) -> RateFit:
    """Fit log(error) = slope * log(scale) + intercept.

    Needs at least two strictly positive points; two points give the exact
    chord slope with r_squared = 1.
    """
    pts = [(float(s), float(e)) for s, e in points]
    if len(pts) < 2:
        raise ValueError("rate_fit needs at least 2 points")
    if any(s <= 0 or e <= 0 for s, e in pts):
        raise ValueError("rate_fit needs strictly positive scales and errors")
    logx = np.log([s for s, _ in pts])
    logy = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(logx, logy, 1)
    fitted = slope * logx + intercept
    ss_res = float(np.sum((logy - fitted) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(float(slope), float(intercept), float(r2), pts)


# ---------------------------------------------------------------------------
# chunked execution
# ---------------------------------------------------------------------------


def _chunk_bounds(n_reps: int, chunk_size: int) -> list[tuple[int, int]]:
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [(lo, min(lo + chunk_size, n_reps)) for lo in range(0, n_reps, chunk_size)]


def _run_chunks(worker, n_reps: int, chunk_size: int, threads: int) -> list:
    """Run worker(lo, hi) over fixed chunk bounds, results in chunk order.

    Per-replication values are pure functions of the replication index, so
    neither the chunk size nor the thread count can change any output.
    """
    bounds = _chunk_bounds(n_reps, chunk_size)
    if threads <= 1:
        return [worker(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: worker(*b), bounds))


def _moment_estimate(values: np.ndarray, r: float) -> tuple[float, float]:
    """((1/n) sum v^r)^(1/r) and its delta-method standard error."""
    n = values.size
    powered = values**r
    m_r = float(powered.mean())
    if m_r == 0.0:
        return 0.0, 0.0
    var_mr = float(powered.var(ddof=1)) / n
    est = m_r ** (1.0 / r)
    se = np.sqrt(var_mr) * est / (r * m_r)
    return est, float(se)


def _check_divergence(n_excluded: int, n_total: int):
    if n_excluded > MAX_DIVERGENCE_FRACTION * n_total:
        raise DivergenceRateError(n_excluded, n_total)


# ---------------------------------------------------------------------------
# strong and weak error estimators
# ---------------------------------------------------------------------------


def strong_error(q1: Covariance, q2: Covariance, cfg: SimConfig, r: float,
                 n_reps: int, seed: int, alpha: float = ALPHA_STRONG,
                 chunk_size: int = 512, threads: int = 1,
                 sup_over_time: bool = True) -> ErrorReport:
    """Estimate sup_{t<=T} ||X^{Q1}(t) - X^{Q2}(t)|| in the L^r(Omega) norm.

    Both paths of a replication consume identical keyed Brownian draws, the
    coupling under which the perturbation bound is stated.  The sup runs
    over every step of the grid; with sup_over_time=False only the terminal
    distance enters, which is what closed-form fixed-time oracles predict.
    Diverged replications are excluded and counted; more than 1% of them
    invalidates the run.
    """
    if r < 1:
        raise ValueError(f"moment order r must be >= 1, got {r}")
    if n_reps < 2:
        raise ValueError("n_reps must be >= 2")

    def worker(lo, hi):
        obs = SupPairDistance(1, 0)
        run = run_coupled(cfg, [q1, q2], seed, np.arange(lo, hi),
                          observers=[obs] if sup_over_time else [])
        excluded = run.diverged[0] | run.diverged[1]
        if sup_over_time:
            dist = obs.sup()
        else:
            d = run.terminal[0] - run.terminal[1]
            dist = np.sqrt(np.einsum("rk,rk->r", d, d))
        return dist, excluded

    parts = _run_chunks(worker, n_reps, chunk_size, threads)
    sups = np.concatenate([p[0] for p in parts])
    excluded = np.concatenate([p[1] for p in parts])
    n_excluded = int(excluded.sum())
    _check_divergence(n_excluded, n_reps)
    valid = sups[~excluded]
    est, se = _moment_estimate(valid, r)
    rhs = weighted_hs_sqrt_distance(q1, q2, alpha)
    return ErrorReport(
        estimate=est,
        std_error=se,
        n_samples=int(valid.size),
        bound_rhs=rhs,
        ratio=est / rhs if rhs > 0 else 0.0,
        r=r,
        n_excluded=n_excluded,
        metadata={
            "kind": "strong",
            "alpha": alpha,
            "sup_over_time": sup_over_time,
            "m": cfg.truncation,
            "dt": cfg.dt,
            "final_time": cfg.final_time,
            "seed": seed,
        },
    )


def weak_error(q1: Covariance, q2: Covariance, phi: TestFunctional, cfg: SimConfig,
               n_reps: int, seed: int, alpha: float = ALPHA_WEAK, crn: bool = True,
               chunk_size: int = 512, threads: int = 1) -> ErrorReport:
    """Estimate |E phi(X^{Q1}(T)) - E phi(X^{Q2}(T))|.

    With crn=True (the default) the two paths of a replication share their
    keyed draws and the estimator is the mean of the paired differences,
    whose standard error it reports.  With crn=False the second system uses
    the disjoint replication block [n_reps, 2 n_reps) and the estimator is
    the difference of independent means.  The signed mean is kept in the
    metadata; estimates smaller than twice their standard error are flagged
    as noise-dominated.
    """
    if n_reps < 2:
        raise ValueError("n_reps must be >= 2")

    if crn:
        def worker(lo, hi):
            run = run_coupled(cfg, [q1, q2], seed, np.arange(lo, hi))
            excluded = run.diverged[0] | run.diverged[1]
            diffs = phi(run.terminal[0]) - phi(run.terminal[1])
            return diffs, excluded

        parts = _run_chunks(worker, n_reps, chunk_size, threads)
        diffs = np.concatenate([p[0] for p in parts])
        excluded = np.concatenate([p[1] for p in parts])
        n_excluded = int(excluded.sum())
        _check_divergence(n_excluded, n_reps)
        valid = diffs[~excluded]
        signed = float(valid.mean())
        se = float(valid.std(ddof=1) / np.sqrt(valid.size))
        n_samples = int(valid.size)
    else:
        def worker_one(q, offset):
            def worker(lo, hi):
                run = run_coupled(cfg, [q], seed, np.arange(lo + offset, hi + offset))
                return phi(run.terminal[0]), run.diverged[0]
            return worker

        vals = []
        n_excluded = 0
        for q, offset in ((q1, 0), (q2, n_reps)):
            parts = _run_chunks(worker_one(q, offset), n_reps, chunk_size, threads)
            v = np.concatenate([p[0] for p in parts])
            ex = np.concatenate([p[1] for p in parts])
            n_excluded += int(ex.sum())
            vals.append(v[~ex])
        _check_divergence(n_excluded, 2 * n_reps)
        signed = float(vals[0].mean() - vals[1].mean())
        se = float(np.sqrt(vals[0].var(ddof=1) / vals[0].size
                           + vals[1].var(ddof=1) / vals[1].size))
        n_samples = int(min(vals[0].size, vals[1].size))

    est = abs(signed)
    rhs = weighted_trace_distance(q1, q2, alpha)
    return ErrorReport(
        estimate=est,
        std_error=se,
        n_samples=n_samples,
        bound_rhs=rhs,
        ratio=est / rhs if rhs > 0 else 0.0,
        n_excluded=n_excluded,
        metadata={
            "kind": "weak",
            "alpha": alpha,
            "signed_mean": signed,
            "noise_dominated": bool(est < 2.0 * se),
            "crn": crn,
            "phi": functional_to_config(phi),
            "m": cfg.truncation,
            "dt": cfg.dt,
            "final_time": cfg.final_time,
            "seed": seed,
        },
    )


# ---------------------------------------------------------------------------
# sweep experiments
# ---------------------------------------------------------------------------


@dataclass
class KlRateResult:
    ns: list[int]
    scales: list[float]
    strong_reports: dict
    weak_reports: dict
    strong_fit: RateFit | None
    weak_fit: RateFit | None


def _fit_from_reports(ns, scales, reports) -> RateFit | None:
    points = []
    for n, s in zip(ns, scales):
        rep = reports.get(n)
        if rep is None:
            continue
        if s <= 0 or rep.estimate <= 0:
            warnings.warn(
                f"sweep point N={n} has zero scale or error and is excluded from the fit"
            )
            continue
        points.append((s, rep.estimate))
    if len(points) < 2:
        return None
    return rate_fit(points)


def kl_rate_experiment(q: DiagonalCovariance | DecayLaw, ns, cfg: SimConfig,
                       mode: str, n_reps: int, seed: int, r: float = 2.0,
                       phi: TestFunctional | None = None, k_max: int | None = None,
                       alpha_strong: float = ALPHA_STRONG,
                       alpha_weak: float = ALPHA_WEAK,
                       chunk_size: int = 512, threads: int = 1) -> KlRateResult:
    """Errors of X^{Q_N} against X^Q across a KL truncation sweep.

    All trajectories of one replication (the full covariance and every
    truncation level) share their keyed draws, so the X^{Q_N} increments
    are literal sub-sums of the X^Q ones.  Errors are fitted against the
    first discarded eigenvalue q_{N+1}.
    """
    if mode not in ("strong", "weak", "both"):
        raise ValueError(f"mode must be strong, weak or both, got {mode!r}")
    if isinstance(q, DecayLaw):
        if k_max is None:
            raise ValueError("a decay law needs k_max to materialize")
        q_full = q.materialize(k_max)
    else:
        q_full = q
    ns = [int(n) for n in ns]
    if sorted(ns) != ns:
        raise ValueError("Ns must be increasing")
    if max(ns) > q_full.truncation:
        raise ValueError("Ns exceed the covariance truncation")
    do_strong = mode in ("strong", "both")
    do_weak = mode in ("weak", "both")
    if do_weak and phi is None:
        raise ValueError("weak mode needs a test functional")

    truncated = [kl_truncate(q_full, n) for n in ns]
    covs = [q_full] + truncated

    def worker(lo, hi):
        observers = [SupPairDistance(i + 1, 0) for i in range(len(ns))] if do_strong else []
        run = run_coupled(cfg, covs, seed, np.arange(lo, hi), observers=observers)
        excluded = run.diverged[0].copy()
        for d in run.diverged[1:]:
            excluded |= d
        sups = [obs.sup() for obs in observers]
        phis = [phi(term) for term in run.terminal] if do_weak else []
        return sups, phis, excluded

    parts = _run_chunks(worker, n_reps, chunk_size, threads)
    excluded = np.concatenate([p[2] for p in parts])
    n_excluded = int(excluded.sum())
    _check_divergence(n_excluded, n_reps)
    keep = ~excluded

    scales = []
    for n in ns:
        scales.append(float(q_full.q[n]) if n < q_full.truncation else 0.0)

    strong_reports: dict = {}
    weak_reports: dict = {}
    for i, n in enumerate(ns):
        rhs_strong = weighted_hs_sqrt_distance(q_full, truncated[i], alpha_strong)
        rhs_weak = weighted_trace_distance(q_full, truncated[i], alpha_weak)
        meta = {
            "n": n,
            "m": cfg.truncation,
            "dt": cfg.dt,
            "final_time": cfg.final_time,
            "seed": seed,
            "scale": scales[i],
        }
        if do_strong:
            sups = np.concatenate([p[0][i] for p in parts])[keep]
            est, se = _moment_estimate(sups, r)
            strong_reports[n] = ErrorReport(
                estimate=est, std_error=se, n_samples=int(sups.size),
                bound_rhs=rhs_strong,
                ratio=est / rhs_strong if rhs_strong > 0 else 0.0,
                r=r, n_excluded=n_excluded,
                metadata=dict(meta, kind="strong", alpha=alpha_strong),
            )
        if do_weak:
            d = (np.concatenate([p[1][0] for p in parts])
                 - np.concatenate([p[1][i + 1] for p in parts]))[keep]
            signed = float(d.mean())
            se = float(d.std(ddof=1) / np.sqrt(d.size))
            weak_reports[n] = ErrorReport(
                estimate=abs(signed), std_error=se, n_samples=int(d.size),
                bound_rhs=rhs_weak,
                ratio=abs(signed) / rhs_weak if rhs_weak > 0 else 0.0,
                n_excluded=n_excluded,
                metadata=dict(meta, kind="weak", alpha=alpha_weak,
                              signed_mean=signed,
                              noise_dominated=bool(abs(signed) < 2.0 * se),
                              phi=functional_to_config(phi)),
            )

    return KlRateResult(
        ns=ns,
        scales=scales,
        strong_reports=strong_reports,
        weak_reports=weak_reports,
        strong_fit=_fit_from_reports(ns, scales, strong_reports) if do_strong else None,
        weak_fit=_fit_from_reports(ns, scales, weak_reports) if do_weak else None,
    )


@dataclass
class GalerkinRateResult:
    ms: list[int]
    m_ref: int
    strong_reports: dict
    weak_reports: dict
    strong_fit: RateFit | None
    weak_fit: RateFit | None


def galerkin_rate_experiment(q: Covariance, ms, m_ref: int, cfg: SimConfig,
                             mode: str, n_reps: int, seed: int, r: float = 2.0,
                             phi: TestFunctional | None = None,
                             alpha_strong: float = ALPHA_STRONG,
                             alpha_weak: float = ALPHA_WEAK,
                             chunk_size: int = 512, threads: int = 1) -> GalerkinRateResult:
    """Errors of X_M against the reference X_{M_ref} across a truncation sweep.

    The keyed draws make the shared modes of the driving noise identical at
    every truncation, so the coupling needs no interpolation.  Both the
    strong and the weak refinement errors are measured at the terminal time
    and fitted against M (slopes are negative).
    """
    if mode not in ("strong", "weak", "both"):
        raise ValueError(f"mode must be strong, weak or both, got {mode!r}")
    ms = [int(m) for m in ms]
    if sorted(ms) != ms:
        raise ValueError("Ms must be increasing")
    if m_ref < 4 * max(ms):
        raise ValueError("the reference truncation must be at least 4x the largest M")
    do_strong = mode in ("strong", "both")
    do_weak = mode in ("weak", "both")
    if do_weak and phi is None:
        raise ValueError("weak mode needs a test functional")
    run_cfg = cfg.replace(truncation=m_ref)
    truncations = ms + [m_ref]
    ref_idx = len(ms)

    def worker(lo, hi):
        run = run_galerkin(run_cfg, q, truncations, seed, np.arange(lo, hi),
                           fft_workers=1)
        excluded = run.diverged[0].copy()
        for d in run.diverged[1:]:
            excluded |= d
        # refinement errors are measured at the terminal time
        ref = run.terminal[ref_idx]
        dists = []
        if do_strong:
            for i, m in enumerate(ms):
                d = run.terminal[i] - ref[:, :m]
                dist_sq = np.einsum("rk,rk->r", d, d)
                tail = ref[:, m:]
                dist_sq = dist_sq + np.einsum("rk,rk->r", tail, tail)
                dists.append(np.sqrt(dist_sq))
        phis = [phi(term) for term in run.terminal] if do_weak else []
        return dists, phis, excluded

    parts = _run_chunks(worker, n_reps, chunk_size, threads)
    excluded = np.concatenate([p[2] for p in parts])
    n_excluded = int(excluded.sum())
    _check_divergence(n_excluded, n_reps)
    keep = ~excluded

    strong_reports: dict = {}
    weak_reports: dict = {}
    for i, m in enumerate(ms):
        meta = {
            "m": m,
            "m_ref": m_ref,
            "dt": cfg.dt,
            "final_time": cfg.final_time,
            "seed": seed,
            "scale": m,
        }
        if do_strong:
            sups = np.concatenate([p[0][i] for p in parts])[keep]
            est, se = _moment_estimate(sups, r)
            strong_reports[m] = ErrorReport(
                estimate=est, std_error=se, n_samples=int(sups.size),
                bound_rhs=float("nan"), ratio=float("nan"), r=r,
                n_excluded=n_excluded,
                metadata=dict(meta, kind="strong"),
            )
        if do_weak:
            d = (np.concatenate([p[1][i] for p in parts])
                 - np.concatenate([p[1][ref_idx] for p in parts]))[keep]
            signed = float(d.mean())
            se = float(d.std(ddof=1) / np.sqrt(d.size))
            weak_reports[m] = ErrorReport(
                estimate=abs(signed), std_error=se, n_samples=int(d.size),
                bound_rhs=float("nan"), ratio=float("nan"),
                n_excluded=n_excluded,
                metadata=dict(meta, kind="weak", signed_mean=signed,
                              noise_dominated=bool(abs(signed) < 2.0 * se),
                              phi=functional_to_config(phi)),
            )

    def fit(reports):
        pts = [(m, reports[m].estimate) for m in ms
               if m in reports and reports[m].estimate > 0]
        if len(pts) < 2:
            return None
        return rate_fit(pts)

    return GalerkinRateResult(
        ms=ms,
        m_ref=m_ref,
        strong_reports=strong_reports,
        weak_reports=weak_reports,
        strong_fit=fit(strong_reports) if do_strong else None,
        weak_fit=fit(weak_reports) if do_weak else None,
    )
