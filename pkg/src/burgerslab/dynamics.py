"""Galerkin-truncated stochastic Burgers dynamics and trajectory simulation.

The state is the coefficient vector of X in the first M sine modes.  The
drift combines the Dirichlet-Laplacian semigroup with the quadratic
transport term B(x) = 2 x dx/dz projected back onto the truncation, and the
additive noise enters through the keyed generator of :mod:`burgerslab.noise`
so that coupled experiments share their Brownian increments exactly.

Two schemes are provided.  The exponential Euler step

    X_{n+1} = e^{dt A} (X_n + dt B_M(X_n)) + S_n

uses, for covariances diagonal in the sine basis, the exact per-mode law of
the noise integral S_n = int e^{(t_{n+1}-s)A} dW, which removes all temporal
bias from the linear part.  The semi-implicit Euler step solves
(I - dt A) X_{n+1} = X_n + dt B_M(X_n) + dW_n mode by mode.

The quadratic term is evaluated pseudospectrally on the interior grid of
size G = 2M - 1: the product x * dx/dz is a sine polynomial of degree at
most 2M whose mode 2M vanishes identically at these nodes, so the quadrature
is exact and the transform sizes stay FFT-friendly.  An O(M^2)
product-to-sum convolution of the same operator is kept as the oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from burgerslab.covariance import (
    Covariance,
    DenseCovariance,
    DiagonalCovariance,
    kl_factor,
)
from burgerslab.noise import (
    SUBSTREAM_INITIAL,
    NoiseBlockPlan,
    NoiseStream,
    ou_decay,
    ou_step_variances,
)
from burgerslab.spectral import SpectralField, eigenvalues

__all__ = [
    "EXPONENTIAL_EULER",
    "SEMI_IMPLICIT_EULER",
    "SimConfig",
    "DeterministicInitial",
    "RandomSmoothInitial",
    "InitialCondition",
    "DivergenceError",
    "nonlinearity_reference",
    "nonlinearity_fast",
    "bilinear_reference",
    "bilinear_fast",
    "NonlinearityWorkspace",
    "step",
    "simulate_path",
    "simulate_convolution",
    "run_coupled",
    "run_galerkin",
    "CoupledRun",
    "PathResult",
    "SupPairDistance",
    "SupSquaredNorm",
    "TrapezoidIntegral",
    "SupGridMax",
    "Snapshots",
    "grad_norm_sq",
    "export_coefficient_csv",
    "export_grid_csv",
]

EXPONENTIAL_EULER = "exponential_euler"
SEMI_IMPLICIT_EULER = "semi_implicit_euler"

_SQRT2 = np.sqrt(2.0)


class DivergenceError(RuntimeError):
    """A trajectory exceeded the blow-up guard."""

    def __init__(self, step_index: int, norm: float):
        super().__init__(
            f"path diverged at step {step_index}: L2 norm {norm:.3e} exceeds the guard"
        )
        self.step_index = step_index
        self.norm = norm


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeterministicInitial:
    """Fixed starting field, projected onto the simulation truncation."""

    field: SpectralField

    @staticmethod
    def zero() -> "DeterministicInitial":
        return DeterministicInitial(SpectralField(np.zeros(1)))

    def sample(self, master_seed: int, replications: np.ndarray, m: int) -> np.ndarray:
        row = self.field.padded(m).coeffs
        return np.tile(row, (len(replications), 1))


@dataclass(frozen=True)
class RandomSmoothInitial:
    """Random initial fields a_k = amplitude * k^-decay * zeta_k.

    zeta_k are independent standard normals truncated to |zeta_k| <= 10 and
    drawn from the keyed initial-condition substream, so the field of a
    replication never depends on the truncation it is projected onto.  The
    constraint decay > 3/2 + 2*delta0 keeps the H^(1/4 + delta0) norm (and
    all its moments, thanks to the truncation of zeta) finite uniformly in
    the truncation.
    """

    amplitude: float
    decay: float
    delta0: float = 0.1

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.delta0 <= 0:
            raise ValueError("delta0 must be > 0")
        if self.decay <= 1.5 + 2.0 * self.delta0:
            raise ValueError(
                f"decay {self.decay} too slow for delta0 = {self.delta0}; "
                f"need decay > {1.5 + 2.0 * self.delta0}"
            )

    def sample(self, master_seed: int, replications: np.ndarray, m: int) -> np.ndarray:
        plan = NoiseBlockPlan(master_seed, replications, m, substream=SUBSTREAM_INITIAL)
        zeta = np.clip(plan.draw(0), -10.0, 10.0)
        k = np.arange(1, m + 1, dtype=np.float64)
        return self.amplitude * k ** (-self.decay) * zeta


InitialCondition = DeterministicInitial | RandomSmoothInitial


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one trajectory simulation."""

    truncation: int
    final_time: float
    dt: float
    scheme: str = EXPONENTIAL_EULER
    nonlinear: bool = True
    initial: InitialCondition = field(default_factory=DeterministicInitial.zero)
    noise_substeps: int = 1
    blowup_threshold: float = 1e6

    def __post_init__(self):
        if self.truncation < 1:
            raise ValueError(f"truncation must be >= 1, got {self.truncation}")
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.final_time <= 0:
            raise ValueError(f"final_time must be > 0, got {self.final_time}")
        if self.scheme not in (EXPONENTIAL_EULER, SEMI_IMPLICIT_EULER):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.noise_substeps < 1:
            raise ValueError("noise_substeps must be >= 1")
        ratio = self.final_time / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"final_time/dt = {ratio!r} is not an integer step count"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.final_time / self.dt))

    def replace(self, **kwargs) -> "SimConfig":
        from dataclasses import replace as _replace

        return _replace(self, **kwargs)


# ---------------------------------------------------------------------------
# the quadratic transport term
# ---------------------------------------------------------------------------


class NonlinearityWorkspace:
    """Buffers for the pseudospectral evaluation of B_M on row batches."""

    def __init__(self, n_rows: int, m: int, workers: int = 1):
        self.m = m
        self.grid = 2 * m - 1
        self.workers = workers
        self._pad = np.zeros((n_rows, self.grid))
        self._sq = np.zeros((n_rows, self.grid + 2))
        mode = np.arange(1, m + 1, dtype=np.float64)
        # coefficient of h_m in d/dz of the cosine series of x^2
        self._deriv = -(mode * np.pi) / (_SQRT2 * (self.grid + 1))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """B_M row by row: x has shape (n_rows, m)."""
        self._pad[:, : self.m] = x
        vals = scipy.fft.dst(self._pad, type=1, axis=-1, workers=self.workers)
        vals *= _SQRT2 / 2.0
        np.multiply(vals, vals, out=self._sq[:, 1:-1])
        cos_coeffs = scipy.fft.dct(self._sq, type=1, axis=-1, workers=self.workers)
        return cos_coeffs[:, 1 : self.m + 1] * self._deriv

    def apply_product(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """P_M of d/dz (x*y), the symmetric bilinear extension of B_M / 2."""
        self._pad[:, : self.m] = x
        vx = scipy.fft.dst(self._pad, type=1, axis=-1, workers=self.workers)
        self._pad[:, : self.m] = y
        vy = scipy.fft.dst(self._pad, type=1, axis=-1, workers=self.workers)
        np.multiply(vx, vy, out=self._sq[:, 1:-1])
        self._sq[:, 1:-1] *= 0.5  # the dst factors each carry sqrt(2)/2
        cos_coeffs = scipy.fft.dct(self._sq, type=1, axis=-1, workers=self.workers)
        return cos_coeffs[:, 1 : self.m + 1] * self._deriv


def nonlinearity_fast(x: SpectralField) -> SpectralField:
    """B_M(x) = P_M(2 x dx/dz) via exact dealiased pseudospectral quadrature."""
    ws = NonlinearityWorkspace(1, x.truncation)
    return SpectralField(ws.apply(x.coeffs[None, :])[0])


def nonlinearity_reference(x: SpectralField) -> SpectralField:
    """B_M(x) by the O(M^2) product-to-sum convolution; the oracle.

    Writing x = sum a_m h_m, the product-to-sum identity
    sin(m pi z) cos(n pi z) = (sin((m+n) pi z) + sin((m-n) pi z)) / 2 gives

        <B(x), h_K> = sqrt(2) pi [ sum_{m+n=K} a_m a_n n
                                   + sum_{m-n=K} a_m a_n n
                                   - sum_{n-m=K} a_m a_n n ].
    """
    a = x.coeffs
    m = x.truncation
    idx = np.arange(1, m + 1, dtype=np.float64)
    weights = np.outer(a, a * idx) * (_SQRT2 * np.pi)
    rows, cols = np.indices((m, m))
    plus = np.bincount((rows + cols + 2).ravel(), weights.ravel(), minlength=2 * m + 1)
    signed = np.bincount((rows - cols + m).ravel(), weights.ravel(), minlength=2 * m + 1)
    out = np.zeros(m)
    for k in range(1, m + 1):
        out[k - 1] = plus[k] + signed[k + m] - signed[m - k]
    return SpectralField(out)


def bilinear_fast(x: SpectralField, y: SpectralField) -> SpectralField:
    """B_M[x, y] = P_M(x dy/dz + y dx/dz) = P_M d/dz (x*y)."""
    if x.truncation != y.truncation:
        raise ValueError("bilinear arguments must share a truncation")
    ws = NonlinearityWorkspace(1, x.truncation)
    return SpectralField(ws.apply_product(x.coeffs[None, :], y.coeffs[None, :])[0])


def bilinear_reference(x: SpectralField, y: SpectralField) -> SpectralField:
    """B_M[x, y] by polarization of the convolution oracle."""
    if x.truncation != y.truncation:
        raise ValueError("bilinear arguments must share a truncation")
    both = nonlinearity_reference(SpectralField(x.coeffs + y.coeffs))
    bx = nonlinearity_reference(x)
    by = nonlinearity_reference(y)
    return SpectralField(0.5 * (both.coeffs - bx.coeffs - by.coeffs))


def grad_norm_sq(states: np.ndarray) -> np.ndarray:
    """Row-wise squared H^1_0 seminorm sum_k (pi k)^2 x_k^2."""
    lam = eigenvalues(states.shape[-1])
    return np.einsum("...k,k,...k->...", states, lam, states)


# ---------------------------------------------------------------------------
# the coupled batch engine
# ---------------------------------------------------------------------------


class _StateScheme:
    """Precomputed update factors for one covariance at one truncation."""

    def __init__(self, cfg: SimConfig, m: int, q: Covariance):
        self.m = m
        s = cfg.noise_substeps
        dt_sub = cfg.dt / s
        lam = eigenvalues(m)
        self.decay = np.exp(-lam * cfg.dt)
        self.implicit = 1.0 / (1.0 + cfg.dt * lam)
        self.dense_factor = None
        if isinstance(q, DiagonalCovariance):
            if q.truncation < m:
                raise ValueError(
                    f"covariance truncation {q.truncation} below state truncation {m}"
                )
            q_modes = q.q[:m]
            if cfg.scheme == EXPONENTIAL_EULER:
                # exact noise integral, aggregated over the keyed substeps
                sub_std = np.sqrt(ou_step_variances(q_modes, dt_sub))
                j = np.arange(s)[:, None]
                self.noise_weights = np.exp(-lam * dt_sub * (s - 1 - j)) * sub_std
            else:
                self.noise_weights = np.tile(np.sqrt(q_modes * dt_sub), (s, 1))
        else:
            factor = kl_factor(q)[:m, :]  # (m, K)
            if cfg.scheme == EXPONENTIAL_EULER:
                self.dense_factor = np.sqrt(dt_sub) * (self.decay[:, None] * factor).T
            else:
                self.dense_factor = np.sqrt(dt_sub) * factor.T


@dataclass
class CoupledRun:
    """Terminal data of a coupled batch simulation."""

    terminal: list[np.ndarray]
    diverged: list[np.ndarray]
    first_divergence: list[np.ndarray]
    divergence_norm: list[np.ndarray]
    truncations: list[int]
    n_steps: int
    dt: float

    def any_divergence(self) -> bool:
        return any(bool(d.any()) for d in self.diverged)


def _run_engine(cfg: SimConfig, specs: list[tuple[int, Covariance]], master_seed: int,
                replications, observers=(), fft_workers: int = 1) -> CoupledRun:
    reps = np.asarray(replications, dtype=np.uint64)
    n_reps = reps.size
    n_states = len(specs)
    if n_states < 1:
        raise ValueError("need at least one covariance")
    kinds = {isinstance(q, DiagonalCovariance) for _, q in specs}
    if len(kinds) > 1:
        raise ValueError(
            "cannot couple diagonal and dense covariances in one run; "
            "convert explicitly with covariance.as_dense first"
        )
    diagonal = kinds.pop()
    if diagonal:
        width = max(m for m, _ in specs)
    else:
        widths = {q.truncation for _, q in specs}
        if len(widths) > 1:
            raise ValueError("dense covariances must share a truncation")
        width = widths.pop()

    schemes = [_StateScheme(cfg, m, q) for m, q in specs]
    states = [np.ascontiguousarray(cfg.initial.sample(master_seed, reps, m))
              for m, _ in specs]
    diverged = [np.zeros(n_reps, dtype=bool) for _ in specs]
    first_div = [np.full(n_reps, -1, dtype=np.int64) for _ in specs]
    div_norm = [np.zeros(n_reps) for _ in specs]
    workspaces = {}
    if cfg.nonlinear:
        for m, _ in specs:
            if m not in workspaces:
                workspaces[m] = NonlinearityWorkspace(n_reps, m, workers=fft_workers)

    plan = NoiseBlockPlan(master_seed, reps, width)
    n_sub = cfg.noise_substeps
    thr_sq = cfg.blowup_threshold**2

    for obs in observers:
        obs.start(states)

    for n in range(cfg.n_steps):
        if diagonal and cfg.scheme == EXPONENTIAL_EULER:
            noises = [None] * n_states
            for j in range(n_sub):
                xi = plan.draw(n * n_sub + j)
                for i, sch in enumerate(schemes):
                    term = sch.noise_weights[j] * xi[:, : sch.m]
                    noises[i] = term if noises[i] is None else noises[i] + term
        else:
            xi_sum = plan.draw(n * n_sub)
            for j in range(1, n_sub):
                xi_sum += plan.draw(n * n_sub + j)
            if diagonal:
                noises = [sch.noise_weights[0] * xi_sum[:, : sch.m] for sch in schemes]
            else:
                noises = [xi_sum @ sch.dense_factor for sch in schemes]

        for i, sch in enumerate(schemes):
            x = states[i]
            if cfg.nonlinear:
                drift = x + cfg.dt * workspaces[sch.m].apply(x)
            else:
                drift = x
            if cfg.scheme == EXPONENTIAL_EULER:
                x = sch.decay * drift
                x += noises[i]
            else:
                x = (drift + noises[i]) * sch.implicit
            norms_sq = np.einsum("rk,rk->r", x, x)
            bad = ~np.isfinite(norms_sq) | (norms_sq > thr_sq)
            if bad.any():
                fresh = bad & ~diverged[i]
                first_div[i][fresh] = n
                div_norm[i][fresh] = np.sqrt(norms_sq[fresh])
                diverged[i] |= bad
                x[bad] = 0.0
            states[i] = x

        t = (n + 1) * cfg.dt
        for obs in observers:
            obs.update(n + 1, t, states)

    return CoupledRun(
        terminal=states,
        diverged=diverged,
        first_divergence=first_div,
        divergence_norm=div_norm,
        truncations=[m for m, _ in specs],
        n_steps=cfg.n_steps,
        dt=cfg.dt,
    )


def run_coupled(cfg: SimConfig, covariances, master_seed: int, replications,
                observers=(), fft_workers: int = 1) -> CoupledRun:
    """Simulate one trajectory per covariance per replication, all driven by
    the same keyed Brownian increments, at the shared truncation of cfg."""
    specs = [(cfg.truncation, q) for q in covariances]
    return _run_engine(cfg, specs, master_seed, replications, observers, fft_workers)


def run_galerkin(cfg: SimConfig, q: Covariance, truncations, master_seed: int,
                 replications, observers=(), fft_workers: int = 1) -> CoupledRun:
    """Simulate the same covariance at several truncations in lockstep.

    The keyed draws make the first min(M, M') modes of the driving noise
    literally identical across truncations, which is the coupling the
    refinement error estimates assume.  cfg.truncation must equal the
    largest requested truncation.
    """
    truncations = list(truncations)
    if cfg.truncation != max(truncations):
        raise ValueError("cfg.truncation must equal the largest truncation")
    specs = [(int(m), q) for m in truncations]
    return _run_engine(cfg, specs, master_seed, replications, observers, fft_workers)


# ---------------------------------------------------------------------------
# observers
# ---------------------------------------------------------------------------


class SupPairDistance:
    """Running max over steps of ||X_i - X_j||_L2 per replication.

    States of different truncations are compared in the union space (the
    shorter vector is zero-padded).
    """

    def __init__(self, i: int, j: int = 0):
        self.i = i
        self.j = j
        self.sup_sq = None

    def _dist_sq(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.shape[1] == b.shape[1]:
            d = a - b
            return np.einsum("rk,rk->r", d, d)
        if a.shape[1] > b.shape[1]:
            a, b = b, a
        m = a.shape[1]
        d = a - b[:, :m]
        out = np.einsum("rk,rk->r", d, d)
        tail = b[:, m:]
        out += np.einsum("rk,rk->r", tail, tail)
        return out

    def start(self, states):
        self.sup_sq = self._dist_sq(states[self.i], states[self.j])

    def update(self, n, t, states):
        np.maximum(self.sup_sq, self._dist_sq(states[self.i], states[self.j]),
                   out=self.sup_sq)

    def sup(self) -> np.ndarray:
        return np.sqrt(self.sup_sq)


class SupSquaredNorm:
    """Running max over steps of ||X_i||_L2^2 per replication."""

    def __init__(self, i: int = 0):
        self.i = i
        self.sup_sq = None

    def start(self, states):
        x = states[self.i]
        self.sup_sq = np.einsum("rk,rk->r", x, x)

    def update(self, n, t, states):
        x = states[self.i]
        np.maximum(self.sup_sq, np.einsum("rk,rk->r", x, x), out=self.sup_sq)


class TrapezoidIntegral:
    """Trapezoid-rule integral over [0, T] of a row functional of X_i."""

    def __init__(self, func, dt: float, i: int = 0):
        self.func = func
        self.dt = dt
        self.i = i
        self.value = None
        self._prev = None

    def start(self, states):
        self._prev = self.func(states[self.i])
        self.value = np.zeros_like(self._prev)

    def update(self, n, t, states):
        cur = self.func(states[self.i])
        self.value += 0.5 * self.dt * (self._prev + cur)
        self._prev = cur


class SupGridMax:
    """Running max over steps of the oversampled grid sup-norm of X_i."""

    def __init__(self, i: int = 0, oversample: int = 4):
        self.i = i
        self.oversample = oversample
        self.sup = None
        self._pad = None

    def _grid_max(self, x: np.ndarray) -> np.ndarray:
        m = x.shape[1]
        g = self.oversample * m
        if self._pad is None or self._pad.shape != (x.shape[0], g):
            self._pad = np.zeros((x.shape[0], g))
        self._pad[:, :m] = x
        vals = scipy.fft.dst(self._pad, type=1, axis=-1) * (_SQRT2 / 2.0)
        return np.abs(vals).max(axis=1)

    def start(self, states):
        self.sup = self._grid_max(states[self.i])

    def update(self, n, t, states):
        np.maximum(self.sup, self._grid_max(states[self.i]), out=self.sup)


class Snapshots:
    """Stores (t, coefficients) every `stride` steps for replication row 0."""

    def __init__(self, stride: int, i: int = 0):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.stride = stride
        self.i = i
        self.times: list[float] = []
        self.fields: list[np.ndarray] = []

    def start(self, states):
        self.times.append(0.0)
        self.fields.append(states[self.i][0].copy())

    def update(self, n, t, states):
        if n % self.stride == 0:
            self.times.append(t)
            self.fields.append(states[self.i][0].copy())


# ---------------------------------------------------------------------------
# single-path interfaces
# ---------------------------------------------------------------------------


def step(state: SpectralField, cfg: SimConfig, stream: NoiseStream, q: Covariance,
         n: int) -> SpectralField:
    """One scheme step of a single trajectory; raises on blow-up."""
    if state.truncation != cfg.truncation:
        raise ValueError("state truncation does not match the configuration")
    scheme = _StateScheme(cfg, cfg.truncation, q)
    x = state.coeffs[None, :].copy()
    n_sub = cfg.noise_substeps
    plan = NoiseBlockPlan(stream.master_seed, [stream.replication_index],
                          cfg.truncation if isinstance(q, DiagonalCovariance) else q.truncation)
    if isinstance(q, DiagonalCovariance) and cfg.scheme == EXPONENTIAL_EULER:
        noise = None
        for j in range(n_sub):
            xi = plan.draw(n * n_sub + j)
            term = scheme.noise_weights[j] * xi[:, : cfg.truncation]
            noise = term if noise is None else noise + term
    else:
        xi_sum = plan.draw(n * n_sub)
        for j in range(1, n_sub):
            xi_sum += plan.draw(n * n_sub + j)
        if isinstance(q, DiagonalCovariance):
            noise = scheme.noise_weights[0] * xi_sum[:, : cfg.truncation]
        else:
            noise = xi_sum @ scheme.dense_factor
    if cfg.nonlinear:
        ws = NonlinearityWorkspace(1, cfg.truncation)
        drift = x + cfg.dt * ws.apply(x)
    else:
        drift = x
    if cfg.scheme == EXPONENTIAL_EULER:
        out = scheme.decay * drift + noise
    else:
        out = (drift + noise) * scheme.implicit
    norm = float(np.linalg.norm(out[0]))
    if not np.isfinite(norm) or norm > cfg.blowup_threshold:
        raise DivergenceError(n, norm)
    return SpectralField(out[0])


@dataclass
class PathResult:
    terminal: SpectralField
    snapshots: list[tuple[float, SpectralField]]


def simulate_path(cfg: SimConfig, q: Covariance, stream: NoiseStream,
                  snapshot_stride: int | None = None) -> PathResult:
    """Iterate the scheme from the projected initial value to final_time."""
    observers = []
    snap = None
    if snapshot_stride is not None:
        snap = Snapshots(snapshot_stride)
        observers.append(snap)
    run = _run_engine(cfg, [(cfg.truncation, q)], stream.master_seed,
                      [stream.replication_index], observers)
    if run.diverged[0][0]:
        raise DivergenceError(int(run.first_divergence[0][0]),
                              float(run.divergence_norm[0][0]))
    snapshots = []
    if snap is not None:
        snapshots = [(t, SpectralField(c)) for t, c in zip(snap.times, snap.fields)]
    return PathResult(SpectralField(run.terminal[0][0]), snapshots)


def simulate_convolution(cfg: SimConfig, q: Covariance, stream: NoiseStream,
                         snapshot_stride: int | None = None) -> PathResult:
    """The pure stochastic convolution (no transport term), exactly sampled.

    Runs the exponential Euler recursion with the drift switched off and the
    per-mode exact noise integral, which reproduces the law of the
    convolution at every grid time regardless of dt.  Diagonal covariances
    only.
    """
    if not isinstance(q, DiagonalCovariance):
        from burgerslab.noise import UnsupportedCovarianceError

        raise UnsupportedCovarianceError(
            "the exact stochastic convolution needs a diagonal covariance"
        )
    conv_cfg = cfg.replace(
        nonlinear=False,
        scheme=EXPONENTIAL_EULER,
        initial=DeterministicInitial.zero(),
    )
    return simulate_path(conv_cfg, q, stream, snapshot_stride)


# ---------------------------------------------------------------------------
# snapshot export
# ---------------------------------------------------------------------------


def export_coefficient_csv(path, snapshots) -> None:
    """Write rows (t, k, coeff) for a list of (t, SpectralField)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,k,coeff\n")
        for t, fld in snapshots:
            for k, c in enumerate(fld.coeffs, start=1):
                fh.write(f"{t!r},{k},{c!r}\n")


def export_grid_csv(path, snapshots, grid_size: int) -> None:
    """Write rows (t, z, value) on the interior grid of the given size."""
    from burgerslab.spectral import coeffs_to_grid, grid_nodes

    nodes = grid_nodes(grid_size)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,z,value\n")
        for t, fld in snapshots:
            vals = coeffs_to_grid(fld.coeffs, grid_size)
            for z, v in zip(nodes, vals):
                fh.write(f"{t!r},{z!r},{v!r}\n")
