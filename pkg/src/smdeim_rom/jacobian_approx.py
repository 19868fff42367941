"""Interpolation of time-dependent sparse Jacobians from snapshots.

Two construction routes share one application form.

The sparse route factors only the r-row matrix of Jacobian values gathered
at the structural pattern coordinates.  Padding its left singular vectors
with zeros at the off-pattern coordinates gives a valid thin SVD of the full
vectorized snapshot matrix (the padded columns stay orthonormal and the
products are untouched), so the greedy index selection can run directly on
the small dense factors and every selected index maps to a pattern
coordinate.

The vectorized reference route materializes the full n^2-row snapshot matrix
and factors it directly.  It exists as an oracle: mathematically it selects
the same leading indexes, but its singular vectors pick up round-off fill-in
at structurally zero coordinates and its cost scales with n^2, which is why
it is kept behind a memory guard.
"""

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .deim import DeimInterpolant, deim_interpolant
from .linalg import thin_svd
from .snapshots import SparsityPattern, scatter

__all__ = [
    "DEFAULT_GUARD",
    "MemoryGuardError",
    "RankError",
    "MatrixInterpolant",
    "guard_limit",
    "build_smdeim",
    "build_mdeim_reference",
    "approximate_matrix",
    "sample_and_approximate",
    "verify_lemma2",
    "Lemma2Report",
    "deim_function_jacobian",
]

DEFAULT_GUARD = 512


class MemoryGuardError(RuntimeError):
    """The vectorized reference route was asked to exceed its memory guard."""


class RankError(ValueError):
    """Requested more modes than the snapshot matrix numerically supports."""


def guard_limit(override=None):
    """Dimension cap for the vectorized route; SMDEIM_GUARD_N overrides."""
    if override is not None:
        return int(override)
    env = os.environ.get("SMDEIM_GUARD_N")
    return int(env) if env else DEFAULT_GUARD


@dataclass(frozen=True)
class MatrixInterpolant:
    """Snapshot-trained interpolant of a matrix-valued function of state.

    mode is "sparse" (gathered, r-dimensional) or "vectorized" (full n^2
    reference).  sample_rows/sample_cols are the matrix coordinates whose
    values must be supplied to apply the interpolant; for the sparse mode
    they always lie inside the pattern.
    """

    mode: str
    pattern: SparsityPattern
    interp: DeimInterpolant
    sample_rows: np.ndarray
    sample_cols: np.ndarray
    singulars: np.ndarray

    @property
    def m(self):
        return self.interp.m

    @property
    def n(self):
        return self.pattern.n


def _check_rank(svd, m, what):
    if m > svd.rank:
        raise RankError(
            f"m={m} exceeds the numerical rank {svd.rank} of the {what} "
            f"snapshot matrix"
        )


def build_smdeim(snap, m):
    """Interpolant over the gathered pattern coordinates (the fast route)."""
    svd = thin_svd(snap.jacobian)
    _check_rank(svd, m, "gathered")
    interp = deim_interpolant(svd.u, m)
    return MatrixInterpolant(
        mode="sparse",
        pattern=snap.pattern,
        interp=interp,
        sample_rows=snap.pattern.rows[interp.indexes].copy(),
        sample_cols=snap.pattern.cols[interp.indexes].copy(),
        singulars=svd.singulars,
    )


def build_mdeim_reference(snap, m, guard_n=None):
    """Interpolant built from explicitly vectorized n^2-row snapshots.

    Reference/oracle route: memory and cost scale with n^2, so dimensions
    above the guard (default 512, env SMDEIM_GUARD_N or guard_n to override)
    are refused.
    """
    n = snap.pattern.n
    limit = guard_limit(guard_n)
    if n > limit:
        raise MemoryGuardError(
            f"dimension {n} exceeds the vectorized-route guard {limit}; "
            "raise SMDEIM_GUARD_N or pass guard_n to override"
        )
    full = np.zeros((n * n, snap.n_cols), dtype=np.float64)
    full[snap.pattern.linear, :] = snap.jacobian
    svd = thin_svd(full, overwrite_a=True)
    del full
    _check_rank(svd, m, "vectorized")
    interp = deim_interpolant(svd.u, m)
    lin = interp.indexes.astype(np.int64)
    return MatrixInterpolant(
        mode="vectorized",
        pattern=snap.pattern,
        interp=interp,
        sample_rows=(lin % n),
        sample_cols=(lin // n),
        singulars=svd.singulars,
    )


def approximate_matrix(mi, samples):
    """Reconstruct the full sparse matrix from values at the sample coords."""
    vec = mi.interp.apply(samples)
    if mi.mode == "sparse":
        return scatter(vec, mi.pattern)
    dense = vec.reshape((mi.n, mi.n), order="F")
    return scipy.sparse.csr_matrix(dense)


def sample_and_approximate(mi, op, x):
    """Sample the operator Jacobian at the interpolation coords and apply."""
    samples = op.sample_jacobian(x, mi.sample_rows, mi.sample_cols)
    return approximate_matrix(mi, samples)


@dataclass(frozen=True)
class Lemma2Report:
    """Result of checking the padded factorization against the full matrix."""

    reconstruction_residual: float
    orthonormality_deviation: float


def verify_lemma2(snap, guard_n=None):
    """Check that padding the gathered SVD factors reproduces the full
    vectorized snapshot matrix.

    Returns a Lemma2Report with the max relative reconstruction residual
    (Frobenius) and the worst deviation of the padded columns from
    orthonormality.  Materializes the n^2-row matrix, hence guarded.
    """
    n = snap.pattern.n
    limit = guard_limit(guard_n)
    if n > limit:
        raise MemoryGuardError(
            f"dimension {n} exceeds the vectorized-route guard {limit}"
        )
    full = np.zeros((n * n, snap.n_cols), dtype=np.float64)
    full[snap.pattern.linear, :] = snap.jacobian
    svd = thin_svd(snap.jacobian)
    padded = np.zeros((n * n, svd.u.shape[1]), dtype=np.float64)
    padded[snap.pattern.linear, :] = svd.u
    recon = padded @ (svd.singulars[:, None] * svd.w.T)
    denom = float(np.linalg.norm(full))
    if denom == 0.0:
        raise ValueError("vectorized snapshot matrix is zero")
    residual = float(np.linalg.norm(full - recon)) / denom
    gram = padded.T @ padded
    ortho = float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
    return Lemma2Report(reconstruction_residual=residual, orthonormality_deviation=ortho)


def deim_function_jacobian(fn_interp, jac_rows):
    """Row-sampled Jacobian approximation V (P^T V)^{-1} (P^T J).

    fn_interp is an interpolant over function snapshots; jac_rows holds the
    Jacobian rows at its selected indexes, shape (m, n), sparse or dense.
    Returns the dense n-by-n approximation (diagnostic scale only).
    """
    if scipy.sparse.issparse(jac_rows):
        jac_rows = jac_rows.toarray()
    jac_rows = np.asarray(jac_rows, dtype=np.float64)
    if jac_rows.shape[0] != fn_interp.m:
        raise ValueError(
            f"expected {fn_interp.m} sampled rows, got {jac_rows.shape[0]}"
        )
    return fn_interp.projector @ jac_rows
