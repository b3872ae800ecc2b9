"""Positive self-adjoint trace-class covariance operators on the sine basis.

Two concrete representations are supported: operators diagonal in the sine
basis (a vector of per-mode variances) and dense symmetric PSD matrices
expressed in the same basis, both materialized on a finite truncation K.
The module provides the operator algebra the perturbation bounds consume:
square roots, Karhunen-Loeve truncation, and the Laplacian-weighted
Schatten distances

    trace weighted:   ||(-A)^-alpha (Q1 - Q2)||_S1
    HS of sqrt gap:   ||(-A)^(-alpha/2) |Q1^(1/2) - Q2^(1/2)|||_S2

which for jointly diagonal operators reduce to explicit mode sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

__all__ = [
    "DiagonalCovariance",
    "DenseCovariance",
    "Covariance",
    "DecayLaw",
    "trace",
    "op_norm",
    "sqrt",
    "kl_truncate",
    "kl_factor",
    "as_dense",
    "weighted_trace_distance",
    "weighted_hs_sqrt_distance",
    "laplacian_schatten_norm",
    "covariance_to_config",
    "covariance_from_config",
]

_SYMMETRY_TOL = 1e-12
_EIG_CLIP_TOL = 1e-10


@dataclass(frozen=True)
class DiagonalCovariance:
    """Covariance diagonal in the sine basis: Q h_k = q[k-1] h_k."""

    q: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.q, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("q must be a non-empty vector of per-mode variances")
        if not np.all(np.isfinite(arr)):
            raise ValueError("per-mode variances must be finite")
        if np.any(arr < 0):
            raise ValueError("per-mode variances must be >= 0")
        object.__setattr__(self, "q", arr)

    @property
    def truncation(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class DenseCovariance:
    """Symmetric PSD matrix in the sine basis.

    Symmetry is required to 1e-12; eigenvalues above -1e-10 are accepted
    and clipped to zero wherever a spectral decomposition is taken, since
    PSD is an exact invariant and such defects are roundoff.
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise ValueError("matrix must be square and non-empty")
        if not np.all(np.isfinite(mat)):
            raise ValueError("matrix entries must be finite")
        scale = max(1.0, float(np.abs(mat).max()))
        if np.abs(mat - mat.T).max() > _SYMMETRY_TOL * scale:
            raise ValueError("matrix must be symmetric to 1e-12 (relative)")
        mat = 0.5 * (mat + mat.T)
        w = np.linalg.eigvalsh(mat)
        if w.min() < -_EIG_CLIP_TOL * scale:
            raise ValueError(
                f"matrix must be PSD: smallest eigenvalue {w.min():.3e} "
                f"is below the -1e-10 roundoff gate"
            )
        object.__setattr__(self, "matrix", mat)

    @property
    def truncation(self) -> int:
        return self.matrix.shape[0]


Covariance = DiagonalCovariance | DenseCovariance


@dataclass(frozen=True)
class DecayLaw:
    """Generator of diagonal covariances from an eigenvalue decay law.

    kind "polynomial" gives q_k = c * k**-beta (trace class needs beta > 1);
    kind "exponential" gives q_k = c * rho**k with 0 < rho < 1.  The law is
    materialized on a finite truncation; :meth:`target_trace` reports the
    trace of the un-truncated operator so the discarded tail is explicit.
    """

    kind: str
    c: float
    exponent: float

    def __post_init__(self):
        if self.kind not in ("polynomial", "exponential"):
            raise ValueError(f"unknown decay law kind {self.kind!r}")
        if self.c <= 0:
            raise ValueError("amplitude c must be > 0")
        if self.kind == "polynomial" and self.exponent <= 1:
            raise ValueError("polynomial decay needs beta > 1 for a finite trace")
        if self.kind == "exponential" and not 0 < self.exponent < 1:
            raise ValueError("exponential decay needs 0 < rho < 1")

    def variances(self, k_max: int) -> np.ndarray:
        k = np.arange(1, k_max + 1, dtype=np.float64)
        if self.kind == "polynomial":
            return self.c * k ** (-self.exponent)
        return self.c * self.exponent ** k

    def materialize(self, k_max: int) -> DiagonalCovariance:
        return DiagonalCovariance(self.variances(k_max))

    def target_trace(self) -> float:
        """Trace of the infinite-rank operator the law describes."""
        if self.kind == "polynomial":
            return float(self.c * zeta(self.exponent))
        return float(self.c * self.exponent / (1.0 - self.exponent))

    def tail_trace(self, k_max: int) -> float:
        """Trace mass discarded by materializing at k_max."""
        return self.target_trace() - float(self.variances(k_max).sum())


def trace(q: Covariance) -> float:
    if isinstance(q, DiagonalCovariance):
        return float(q.q.sum())
    return float(np.trace(q.matrix))


def op_norm(q: Covariance) -> float:
    """Largest eigenvalue (the L(L2) operator norm of a PSD operator)."""
    if isinstance(q, DiagonalCovariance):
        return float(q.q.max())
    w = np.linalg.eigvalsh(q.matrix)
    return float(max(w.max(), 0.0))


def _clipped_eigh(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with eigenvalues clipped at 0 and deterministic
    eigenvector signs (largest-magnitude component made positive), so the
    KL factor of a truncated operator is a column prefix of the parent's."""
    w, v = np.linalg.eigh(mat)
    lead = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[lead, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return np.clip(w, 0.0, None), v * signs


def sqrt(q: Covariance) -> Covariance:
    """Unique PSD square root, same representation as the input."""
    if isinstance(q, DiagonalCovariance):
        return DiagonalCovariance(np.sqrt(q.q))
    w, v = _clipped_eigh(q.matrix)
    return DenseCovariance((v * np.sqrt(w)) @ v.T)


def _kl_order(w: np.ndarray) -> np.ndarray:
    """Indices sorted by descending eigenvalue, ties broken by index."""
    return np.lexsort((np.arange(w.size), -w))


def kl_truncate(q: Covariance, n: int) -> Covariance:
    """Keep the n leading Karhunen-Loeve modes, zeroing the rest.

    For a diagonal operator the KL modes are the sine modes in their given
    order (q_1..q_n are kept); for a dense operator the n largest-eigenvalue
    eigenpairs are kept, ties broken by index.  The trace never increases.
    """
    if not 0 <= n <= q.truncation:
        raise ValueError(f"KL truncation level {n} outside [0, {q.truncation}]")
    if isinstance(q, DiagonalCovariance):
        out = np.zeros_like(q.q)
        out[:n] = q.q[:n]
        return DiagonalCovariance(out)
    w, v = _clipped_eigh(q.matrix)
    keep = _kl_order(w)[:n]
    vk = v[:, keep]
    return DenseCovariance((vk * w[keep]) @ vk.T)


def kl_factor(q: Covariance) -> np.ndarray:
    """Matrix F with F @ F.T = Q whose columns are KL modes scaled by
    the root eigenvalues, in descending-eigenvalue order (ties by index).

    Column j is the image of the j-th independent scalar Brownian motion,
    so truncating columns is exactly KL truncation of the noise.  For a
    diagonal operator the columns stay in sine order, matching the per-mode
    coupling convention.
    """
    if isinstance(q, DiagonalCovariance):
        return np.diag(np.sqrt(q.q))
    w, v = _clipped_eigh(q.matrix)
    order = _kl_order(w)
    return v[:, order] * np.sqrt(w[order])


def as_dense(q: Covariance) -> DenseCovariance:
    if isinstance(q, DenseCovariance):
        return q
    return DenseCovariance(np.diag(q.q))


def _weights(alpha: float, k_max: int) -> np.ndarray:
    k = np.arange(1, k_max + 1, dtype=np.float64)
    return (np.pi * k) ** (-2.0 * alpha)


def _check_same_truncation(q1: Covariance, q2: Covariance):
    if q1.truncation != q2.truncation:
        raise ValueError(
            f"covariances live on different truncations: "
            f"{q1.truncation} vs {q2.truncation}"
        )


def weighted_trace_distance(q1: Covariance, q2: Covariance, alpha: float) -> float:
    """Trace norm of (-A)^-alpha (Q1 - Q2).

    Jointly diagonal operators reduce to
    sum_k (pi k)^(-2 alpha) |q1_k - q2_k|; otherwise the norm is the sum of
    singular values of D^-alpha (Q1 - Q2) with D the Laplacian eigenvalue
    diagonal (the product is not symmetric, so singular values are used).
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    _check_same_truncation(q1, q2)
    if isinstance(q1, DiagonalCovariance) and isinstance(q2, DiagonalCovariance):
        return float(np.sum(_weights(alpha, q1.truncation) * np.abs(q1.q - q2.q)))
    diff = as_dense(q1).matrix - as_dense(q2).matrix
    weighted = _weights(alpha, diff.shape[0])[:, None] * diff
    return float(np.linalg.svd(weighted, compute_uv=False).sum())


def weighted_hs_sqrt_distance(q1: Covariance, q2: Covariance, alpha: float) -> float:
    """Hilbert-Schmidt norm of (-A)^(-alpha/2) |Q1^(1/2) - Q2^(1/2)|.

    Jointly diagonal operators reduce to
    (sum_k (pi k)^(-2 alpha) (sqrt(q1_k) - sqrt(q2_k))**2)**(1/2).  In the
    dense case the absolute value of the self-adjoint gap S1 - S2 is taken
    in its own eigenbasis (the functional calculus |S| = V |w| V^T), then
    the row-weighted Frobenius norm is formed.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    _check_same_truncation(q1, q2)
    if isinstance(q1, DiagonalCovariance) and isinstance(q2, DiagonalCovariance):
        gap = np.sqrt(q1.q) - np.sqrt(q2.q)
        return float(np.sqrt(np.sum(_weights(alpha, q1.truncation) * gap**2)))
    s1 = sqrt(as_dense(q1)).matrix
    s2 = sqrt(as_dense(q2)).matrix
    w, v = np.linalg.eigh(s1 - s2)
    abs_gap = (v * np.abs(w)) @ v.T
    weighted = _weights(alpha / 2.0, abs_gap.shape[0])[:, None] * abs_gap
    return float(np.linalg.norm(weighted))


def laplacian_schatten_norm(alpha: float, p: int, k_max: int | None = None) -> float:
    """Schatten norms of negative Laplacian powers.

    p = 1 returns sum_{k<=K} (pi k)^(-2 alpha), the trace norm of
    (-A)^-alpha; p = 2 returns its square root, the Hilbert-Schmidt norm of
    (-A)^(-alpha/2).  These agree with the identity
    ||(-A)^(-alpha/2)||_S2^2 = ||(-A)^-alpha||_S1.  With k_max None the full
    series is returned via the zeta function; it is finite exactly when
    alpha > 1/2, and a ValueError is raised otherwise.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    if k_max is None:
        if alpha <= 0.5:
            raise ValueError(
                f"the series sum (pi k)^(-2 alpha) diverges for alpha = {alpha} <= 1/2"
            )
        total = float(np.pi ** (-2.0 * alpha) * zeta(2.0 * alpha))
    else:
        if k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {k_max}")
        total = float(np.sum(_weights(alpha, k_max)))
    return total if p == 1 else float(np.sqrt(total))


def covariance_to_config(q: Covariance | DecayLaw) -> dict:
    """Serializable description, inverted by :func:`covariance_from_config`."""
    if isinstance(q, DiagonalCovariance):
        return {"kind": "diagonal", "q": [float(v) for v in q.q]}
    if isinstance(q, DenseCovariance):
        return {"kind": "dense", "matrix": [[float(v) for v in row] for row in q.matrix]}
    return {
        "kind": "decay",
        "law": q.kind,
        "c": float(q.c),
        ("beta" if q.kind == "polynomial" else "rho"): float(q.exponent),
    }


def covariance_from_config(spec: dict, k_max: int | None = None,
                           base_dir=None) -> Covariance:
    """Build a covariance from a config mapping.

    Recognized kinds: "diagonal" {q: [...]}, "dense" {matrix: [[...]]} or
    {matrix_csv: path} (a headerless CSV matrix, resolved against base_dir),
    and "decay" {law, c, beta|rho} which is materialized at k_max.
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("covariance config must be a mapping with a 'kind' key")
    kind = spec["kind"]
    known = {
        "diagonal": {"kind", "q"},
        "dense": {"kind", "matrix", "matrix_csv"},
        "decay": {"kind", "law", "c", "beta", "rho", "K"},
    }
    if kind not in known:
        raise ValueError(f"unknown covariance kind {kind!r}")
    extra = set(spec) - known[kind]
    if extra:
        raise ValueError(f"unknown keys in covariance config: {sorted(extra)}")
    if kind == "diagonal":
        return DiagonalCovariance(np.asarray(spec["q"], dtype=np.float64))
    if kind == "dense":
        if ("matrix" in spec) == ("matrix_csv" in spec):
            raise ValueError("dense covariance needs exactly one of matrix, matrix_csv")
        if "matrix" in spec:
            return DenseCovariance(np.asarray(spec["matrix"], dtype=np.float64))
        from pathlib import Path

        path = Path(spec["matrix_csv"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if not path.is_file():
            raise ValueError(f"covariance matrix file not found: {path}")
        return DenseCovariance(np.loadtxt(path, delimiter=",", ndmin=2))
    law_kind = spec.get("law", "polynomial")
    exponent = spec.get("beta") if law_kind == "polynomial" else spec.get("rho")
    if exponent is None:
        raise ValueError(f"decay law {law_kind!r} needs its exponent")
    law = DecayLaw(kind=law_kind, c=float(spec.get("c", 1.0)), exponent=float(exponent))
    k = spec.get("K", k_max)
    if k is None:
        raise ValueError("decay-law covariance needs a truncation K")
    return law.materialize(int(k))
