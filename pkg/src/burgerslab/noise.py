"""Reproducible keyed Brownian increments and exact stochastic convolutions.

Every standard-normal draw in the laboratory is addressed by a key

    (master_seed, substream, replication, step, mode)

and is computed as a pure function of that key with the Philox4x64-10
counter-based generator:

    key     = (master_seed mod 2**64, KEY_SALT)
    counter = (mode_group, step, replication, substream),  mode_group = (mode-1) // 4

The four 64-bit output words of one Philox block supply modes
4*g+1 .. 4*g+4; each word is mapped to (0, 1) by u = (w >> 11) * 2^-53 +
2^-54 and to a normal by the inverse CDF.  Consequences that the coupling
experiments rely on:

* the draw for a given mode and step never depends on how many modes or
  replications anyone else requests (truncation refinement is free),
* every covariance driven from the same stream consumes literally the same
  scalar Brownian increments, and
* generation order, chunking and thread count cannot change any value.

Substream 0 carries the driving noise of trajectories, substream 1 carries
random initial conditions.  The schema above is frozen; changing it breaks
reproducibility of archived runs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

# the TBB version nag from numba's threading-layer probe is environmental
# noise; numba falls back to a working layer
warnings.filterwarnings("ignore", message=".*TBB.*")

import numba as nb
import numpy as np
from scipy.special import ndtri

from burgerslab.covariance import Covariance, DiagonalCovariance, kl_factor
from burgerslab.spectral import SpectralField, eigenvalues

__all__ = [
    "KEY_SALT",
    "SUBSTREAM_PATH",
    "SUBSTREAM_INITIAL",
    "NoiseStream",
    "NoiseBlockPlan",
    "IncrementBatch",
    "UnsupportedCovarianceError",
    "keyed_normals",
    "keyed_normals_block",
    "wiener_increment",
    "ou_exact_step",
    "ou_decay",
    "ou_step_variances",
    "convolution_variances",
    "ou_pair_distance_sq",
]

KEY_SALT = 0x1BD11BDAA9FC1A22
SUBSTREAM_PATH = 0
SUBSTREAM_INITIAL = 1

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


class UnsupportedCovarianceError(ValueError):
    """Raised when an operation needs a representation it does not support."""


@nb.njit(nb.uint64(nb.uint64, nb.uint64), inline="always", cache=True)
def _umulh(a, b):
    alo = a & nb.uint64(0xFFFFFFFF)
    ahi = a >> nb.uint64(32)
    blo = b & nb.uint64(0xFFFFFFFF)
    bhi = b >> nb.uint64(32)
    t = alo * blo
    t1 = ahi * blo + (t >> nb.uint64(32))
    t2 = alo * bhi + (t1 & nb.uint64(0xFFFFFFFF))
    return ahi * bhi + (t1 >> nb.uint64(32)) + (t2 >> nb.uint64(32))


@nb.njit(
    nb.uint64[:, ::1](nb.uint64[::1], nb.uint64[::1], nb.uint64, nb.uint64, nb.uint64, nb.uint64),
    parallel=True,
    cache=True,
)
def _philox_grid(c0s, c2s, c1, c3, key0, key1):
    """Philox4x64-10 blocks for counters (c0s[i], c1, c2s[i], c3)."""
    mul0 = nb.uint64(0xD2E7470EE14C6C93)
    mul1 = nb.uint64(0xCA5A826395121157)
    weyl0 = nb.uint64(0x9E3779B97F4A7C15)
    weyl1 = nb.uint64(0xBB67AE8584CAA73B)
    n = c0s.shape[0]
    out = np.empty((n, 4), dtype=np.uint64)
    for i in nb.prange(n):
        x0 = c0s[i]
        x1 = c1
        x2 = c2s[i]
        x3 = c3
        k0 = key0
        k1 = key1
        for _ in range(10):
            hi0 = _umulh(mul0, x0)
            lo0 = mul0 * x0
            hi1 = _umulh(mul1, x2)
            lo1 = mul1 * x2
            x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
            k0 += weyl0
            k1 += weyl1
        out[i, 0] = x0
        out[i, 1] = x1
        out[i, 2] = x2
        out[i, 3] = x3
    return out


def _words_to_normals(words: np.ndarray) -> np.ndarray:
    u = (words >> _U64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54
    return ndtri(u)


class NoiseBlockPlan:
    """Precomputed counter layout for drawing (replications, modes) blocks.

    Reuses the lane index arrays across the many steps of a simulation;
    the values drawn are identical to per-cell :func:`keyed_normals` calls.
    """

    def __init__(self, master_seed: int, replications: np.ndarray, n_modes: int,
                 substream: int = SUBSTREAM_PATH):
        reps = np.asarray(replications, dtype=np.uint64)
        if reps.ndim != 1 or reps.size < 1:
            raise ValueError("replications must be a non-empty 1-d integer array")
        if n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {n_modes}")
        groups = (n_modes + 3) // 4
        self.n_reps = reps.size
        self.n_modes = n_modes
        self._groups = groups
        self._c0 = np.ascontiguousarray(np.tile(np.arange(groups, dtype=np.uint64), reps.size))
        self._c2 = np.ascontiguousarray(np.repeat(reps, groups))
        self._key0 = _U64(master_seed & _MASK64)
        self._key1 = _U64(KEY_SALT)
        self._c3 = _U64(substream)

    def draw(self, step: int) -> np.ndarray:
        """Standard normals of shape (n_reps, n_modes) for one step index."""
        words = _philox_grid(self._c0, self._c2, _U64(step), self._c3,
                             self._key0, self._key1)
        z = _words_to_normals(words)
        return z.reshape(self.n_reps, self._groups * 4)[:, : self.n_modes]


def keyed_normals_block(master_seed: int, replications, step: int, n_modes: int,
                        substream: int = SUBSTREAM_PATH) -> np.ndarray:
    """Draws for several replications at one step, shape (n_reps, n_modes)."""
    plan = NoiseBlockPlan(master_seed, np.asarray(replications), n_modes, substream)
    return plan.draw(step)


def keyed_normals(master_seed: int, replication: int, step: int, n_modes: int,
                  substream: int = SUBSTREAM_PATH) -> np.ndarray:
    """The standard-normal vector (xi_{1,step}, ..., xi_{n_modes,step})."""
    return keyed_normals_block(master_seed, [replication], step, n_modes, substream)[0]


@dataclass(frozen=True)
class NoiseStream:
    """Addressable source of the scalar Brownian motions of one replication."""

    master_seed: int
    replication_index: int = 0

    def normals(self, step: int, n_modes: int, substream: int = SUBSTREAM_PATH) -> np.ndarray:
        return keyed_normals(self.master_seed, self.replication_index, step,
                             n_modes, substream)

    def for_replication(self, replication: int) -> "NoiseStream":
        return NoiseStream(self.master_seed, replication)


@dataclass(frozen=True)
class IncrementBatch:
    """Increments of the noise modes over one time step."""

    dW: np.ndarray
    dt: float


def wiener_increment(stream: NoiseStream, q: Covariance, step: int, dt: float,
                     m: int) -> IncrementBatch:
    """Increment of the first m modes of the Q-Wiener process over dt.

    Diagonal covariances map mode k to sqrt(q_k dt) xi_{k,step}.  Dense
    covariances send a single standard-normal vector through the KL factor
    (columns in descending-eigenvalue order), so KL truncations of the same
    operator receive a literal sub-sum of the parent's increments.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if q.truncation < m:
        raise ValueError(f"covariance truncation {q.truncation} below m = {m}")
    if isinstance(q, DiagonalCovariance):
        xi = stream.normals(step, m)
        return IncrementBatch(np.sqrt(q.q[:m] * dt) * xi, dt)
    xi = stream.normals(step, q.truncation)
    full = kl_factor(q) @ (np.sqrt(dt) * xi)
    return IncrementBatch(full[:m], dt)


def ou_decay(m: int, dt: float) -> np.ndarray:
    """Per-mode heat-semigroup factor exp(-(pi k)^2 dt)."""
    return np.exp(-eigenvalues(m) * dt)


def ou_step_variances(q_modes: np.ndarray, dt: float) -> np.ndarray:
    """Exact variance of the per-mode noise integral over one step.

    Mode k of int_0^dt e^{(dt-s)A} dW has variance
    q_k (1 - exp(-2 lambda_k dt)) / (2 lambda_k); computed with expm1 so
    small lambda_k*dt does not lose precision.
    """
    lam = eigenvalues(q_modes.size)
    return q_modes * (-np.expm1(-2.0 * lam * dt)) / (2.0 * lam)


def ou_exact_step(y: SpectralField, stream: NoiseStream, q: Covariance, step: int,
                  dt: float) -> SpectralField:
    """One exact Ornstein-Uhlenbeck transition of the stochastic convolution.

    y'_k = exp(-lambda_k dt) y_k + eta_k with
    eta_k ~ N(0, q_k (1 - exp(-2 lambda_k dt)) / (2 lambda_k)), drawn from
    the keyed stream, which is the exact law of the mild-solution noise
    integral mode by mode.  Only covariances diagonal in the sine basis
    admit this per-mode transition.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not isinstance(q, DiagonalCovariance):
        raise UnsupportedCovarianceError(
            "exact OU transitions need a covariance diagonal in the sine basis; "
            "use wiener_increment with a small dt instead"
        )
    m = y.truncation
    if q.truncation < m:
        raise ValueError(f"covariance truncation {q.truncation} below field truncation {m}")
    xi = stream.normals(step, m)
    std = np.sqrt(ou_step_variances(q.q[:m], dt))
    return SpectralField(ou_decay(m, dt) * y.coeffs + std * xi)


def convolution_variances(q: DiagonalCovariance, t: float, m: int | None = None) -> np.ndarray:
    """Per-mode variance of the stochastic convolution at time t from rest."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if not isinstance(q, DiagonalCovariance):
        raise UnsupportedCovarianceError("per-mode variances need a diagonal covariance")
    modes = q.truncation if m is None else m
    return ou_step_variances(q.q[:modes], t) if t > 0 else np.zeros(modes)


def ou_pair_distance_sq(q1: Covariance, q2: Covariance, t: float) -> float:
    """Exact E || Y^{Q1}(t) - Y^{Q2}(t) ||^2 for convolutions sharing their
    driving Brownian motions.

    By the Ito isometry this is
    sum_k (sqrt(q1_k) - sqrt(q2_k))^2 (1 - exp(-2 lambda_k t)) / (2 lambda_k),
    the analytic oracle for the sharpness of the strong perturbation bound.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if not (isinstance(q1, DiagonalCovariance) and isinstance(q2, DiagonalCovariance)):
        raise UnsupportedCovarianceError("the pair distance oracle needs diagonal covariances")
    if q1.truncation != q2.truncation:
        raise ValueError("covariances live on different truncations")
    if t == 0:
        return 0.0
    gap_sq = (np.sqrt(q1.q) - np.sqrt(q2.q)) ** 2
    return float(np.sum(ou_step_variances(gap_sq, t)))
