"""Quadratic right-hand-side operator: the structure both models share.

Every model here has the form

    F(x) = L x + sum_t (G_t x) (.) (H_t x)

with sparse L, G_t, H_t ((.) is the entrywise product).  That single form
provides, generically and exactly:

* the sparse Jacobian  J(x) = L + sum_t [diag(G_t x) H_t + diag(H_t x) G_t],
* O(stencil) evaluation of any single Jacobian entry without assembling J,
* a time-invariant structural sparsity pattern,
* the ingredients for exact reduced-space precomputation of the projected
  residual and Jacobian.

The structural pattern is fixed once from the operator graphs (not from
values at some state), so entries that happen to vanish numerically at a
given state are still stored and the pattern never changes along a
trajectory.
"""

import numpy as np
import scipy.sparse

from .. import instrumentation
from ..snapshots import SparsityPattern

__all__ = ["QuadraticOperator"]


def _as_sorted_csr(mat):
    out = scipy.sparse.csr_matrix(mat, dtype=np.float64, copy=True)
    out.sum_duplicates()
    out.sort_indices()
    return out


def _structural_linear_indexes(mat, row_mask=None):
    # linear column-major indexes of stored entries, optionally masked by row
    coo = mat.tocoo()
    rows = coo.row.astype(np.int64)
    cols = coo.col.astype(np.int64)
    if row_mask is not None:
        keep = row_mask[rows]
        rows, cols = rows[keep], cols[keep]
    return cols * np.int64(mat.shape[0]) + rows


def _aligned_values(mat, pattern):
    # values of mat spread onto the pattern coordinate list (zeros elsewhere)
    coo = mat.tocoo()
    pos = pattern.positions_of(coo.row, coo.col)
    if np.any(pos < 0):
        raise AssertionError("operator entry outside the structural pattern")
    out = np.zeros(pattern.r, dtype=np.float64)
    out[pos] = coo.data
    return out


def _row_major_template(pattern):
    # permutation from the pattern's column-major order into CSR order
    perm = np.lexsort((pattern.cols, pattern.rows))
    indices = pattern.cols[perm].astype(np.int32)
    counts = np.bincount(pattern.rows, minlength=pattern.n)
    indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int32)
    return perm, indices, indptr


def _entry(mat, a, b):
    # stored value at (a, b) of a sorted CSR matrix, 0.0 if absent
    start, end = mat.indptr[a], mat.indptr[a + 1]
    view = mat.indices[start:end]
    pos = np.searchsorted(view, b)
    if pos < view.size and view[pos] == b:
        return float(mat.data[start + pos])
    return 0.0


def _row_dot(mat, a, x):
    # (mat @ x)[a] accumulated left to right, matching the CSR matvec order
    # bit for bit so sampled entries equal assembled ones exactly
    start = int(mat.indptr[a])
    end = int(mat.indptr[a + 1])
    indices = mat.indices
    data = mat.data
    acc = 0.0
    for jj in range(start, end):
        acc += data[jj] * x[indices[jj]]
    return acc, end - start


class QuadraticOperator:
    """F(x) = linear @ x + sum over pairs of (G x) (.) (H x)."""

    def __init__(self, linear, pairs):
        self.linear = _as_sorted_csr(linear)
        n = self.linear.shape[0]
        if self.linear.shape != (n, n):
            raise ValueError("linear part must be square")
        self.pairs = []
        for g, h in pairs:
            g = _as_sorted_csr(g)
            h = _as_sorted_csr(h)
            if g.shape != (n, n) or h.shape != (n, n):
                raise ValueError("pair factors must match the operator dimension")
            self.pairs.append((g, h))
        self.n = n

        nl_lin = []
        for g, h in self.pairs:
            g_rows = np.diff(g.indptr) > 0
            h_rows = np.diff(h.indptr) > 0
            nl_lin.append(_structural_linear_indexes(h, row_mask=g_rows))
            nl_lin.append(_structural_linear_indexes(g, row_mask=h_rows))
        nl_union = (
            np.unique(np.concatenate(nl_lin)) if nl_lin else np.empty(0, np.int64)
        )
        full_union = np.union1d(nl_union, _structural_linear_indexes(self.linear))
        self.pattern = SparsityPattern(
            n=n, rows=full_union % n, cols=full_union // n
        )
        self.nl_pattern = SparsityPattern(n=n, rows=nl_union % n, cols=nl_union // n)

        self._lvals = _aligned_values(self.linear, self.pattern)
        self._aligned = [
            (_aligned_values(g, self.pattern), _aligned_values(h, self.pattern))
            for g, h in self.pairs
        ]
        self._csr_perm, self._csr_indices, self._csr_indptr = _row_major_template(
            self.pattern
        )
        # fixed per-entry sampling charge: the stencil-width bound, so the
        # accounted cost of m samples depends on m and the operator alone,
        # never on where the samples land in the grid
        self._sample_charge = sum(
            int(np.diff(g.indptr).max(initial=0))
            + int(np.diff(h.indptr).max(initial=0))
            + 2
            for g, h in self.pairs
        )
        nl_perm, nl_indices, nl_indptr = _row_major_template(self.nl_pattern)
        self._nl_csr = (nl_perm, nl_indices, nl_indptr)
        self._nl_aligned = [
            (
                _aligned_values(g, self.nl_pattern)[nl_perm],
                _aligned_values(h, self.nl_pattern)[nl_perm],
            )
            for g, h in self.pairs
        ]

    # -- full-space evaluation -------------------------------------------

    def rhs(self, x):
        out = self.linear @ x
        for g, h in self.pairs:
            out = out + (g @ x) * (h @ x)
        return out

    def nonlinear_term(self, x):
        out = np.zeros(self.n, dtype=np.float64)
        for g, h in self.pairs:
            out = out + (g @ x) * (h @ x)
        return out

    def jacobian_values(self, x):
        """Jacobian entries at the pattern coordinates (column-major order)."""
        out = self._lvals.copy()
        rows = self.pattern.rows
        for (g, h), (gvals, hvals) in zip(self.pairs, self._aligned):
            gx = g @ x
            hx = h @ x
            out += gx[rows] * hvals
            out += hx[rows] * gvals
        return out

    def jacobian(self, x):
        """Assembled sparse Jacobian with the fixed structural pattern."""
        vals = self.jacobian_values(x)[self._csr_perm]
        return scipy.sparse.csr_matrix(
            (vals, self._csr_indices.copy(), self._csr_indptr.copy()),
            shape=(self.n, self.n),
        )

    # -- pointwise sampling (independent of n) ----------------------------

    def sample_jacobian(self, x, rows, cols):
        """Jacobian values at arbitrary coordinates, one entry at a time.

        Cost per entry is bounded by the operator stencil width; coordinates
        outside the structural pattern evaluate to 0.  Agrees bit for bit
        with `jacobian_values` on pattern coordinates.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have equal length")
        out = np.empty(rows.size, dtype=np.float64)
        for q in range(rows.size):
            a = int(rows[q])
            b = int(cols[q])
            val = _entry(self.linear, a, b)
            for g, h in self.pairs:
                gxa, _ = _row_dot(g, a, x)
                hxa, _ = _row_dot(h, a, x)
                val += gxa * _entry(h, a, b)
                val += hxa * _entry(g, a, b)
            out[q] = val
        instrumentation.bump("sample_flops", rows.size * self._sample_charge)
        return out

    def sample_nl_rows(self, x, row_ids):
        """Rows of the nonlinear-part Jacobian as a (len(row_ids), n) CSR.

        Cost per row is bounded by the stencil width of the requested rows.
        """
        row_ids = np.asarray(row_ids, dtype=np.int64)
        _, nl_indices, nl_indptr = self._nl_csr
        data = []
        indices = []
        indptr = [0]
        for a in row_ids:
            a = int(a)
            start, end = int(nl_indptr[a]), int(nl_indptr[a + 1])
            vals = np.zeros(end - start, dtype=np.float64)
            for (g, h), (gvals, hvals) in zip(self.pairs, self._nl_aligned):
                gxa, _ = _row_dot(g, a, x)
                hxa, _ = _row_dot(h, a, x)
                vals += gxa * hvals[start:end]
                vals += hxa * gvals[start:end]
            data.append(vals)
            indices.append(nl_indices[start:end])
            indptr.append(indptr[-1] + (end - start))
        data = np.concatenate(data) if data else np.empty(0)
        indices = np.concatenate(indices) if indices else np.empty(0, np.int32)
        return scipy.sparse.csr_matrix(
            (data, indices, np.asarray(indptr, dtype=np.int64)),
            shape=(row_ids.size, self.n),
        )

    # -- reduced-space precomputation --------------------------------------

    def reduced_quadratic_tensor(self, u):
        """Tensor q with q[j, l, p] = sum_t sum_s u[s,j] (H_t u)[s,l] (G_t u)[s,p].

        Contracting q with reduced coordinates gives the exact projected
        quadratic term: residual_j = xt^T q[j] xt and Jacobian term
        sum_p xt_p (q[j,l,p] + q[j,p,l]).
        """
        k = u.shape[1]
        tensor = np.zeros((k, k, k), dtype=np.float64)
        for g, h in self.pairs:
            gu = np.asarray(g @ u)
            hu = np.asarray(h @ u)
            tensor += np.einsum("sj,sl,sp->jlp", u, hu, gu, optimize=True)
        return tensor

    def reduced_linear(self, u, mean=None):
        """U^T J(mean) U for the state-independent Jacobian part.

        With mean=None (or zero) this is just the projected linear part; a
        nonzero mean adds the quadratic derivative frozen at the mean.
        """
        out = u.T @ (self.linear @ u)
        if mean is not None and np.any(mean):
            for g, h in self.pairs:
                gm = g @ mean
                hm = h @ mean
                out += u.T @ (gm[:, None] * (h @ u))
                out += u.T @ (hm[:, None] * (g @ u))
        return out
