"""Projection-based reduced models with interchangeable Jacobian strategies.

The reduced trajectory solves, per stage,

    r(xt) = xt - b - fraction * dt * F_red(xt) = 0,
    b = xt_prev + fraction * dt * F_exp(xt_prev),

by Newton iteration on k unknowns.  The reduced nonlinearity F_red is always
evaluated through exact precomputed tensors (projected constant, linear and
quadratic parts of the operator), so every strategy converges to the same
root; the strategies differ only in how the k-by-k Newton matrix is built:

* direct-projection: assemble the full sparse Jacobian and project it.
* tensorial: contract the precomputed quadratic tensor (exact, no full
  dimension work online).
* directional-derivative: forward differences of the full right-hand side
  along the basis directions.
* deim: interpolate the nonlinear-term Jacobian from sampled rows, linear
  part projected exactly offline.
* smdeim: interpolate the full Jacobian from entries sampled at pattern
  coordinates, contracted to k-by-k offline.
* mdeim-reference: same contraction built from the guarded vectorized
  route, kept as an oracle.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import instrumentation
from .jacobian_approx import RankError, build_mdeim_reference, build_smdeim
from .deim import deim_interpolant
from .linalg import solve_dense, thin_svd
from .pod import PodBasis
from .stats import NewtonConvergenceError, NewtonStats

__all__ = [
    "STRATEGIES",
    "TensorCore",
    "ReducedStage",
    "ReducedModel",
    "build_tensor_core",
    "reduce_model",
    "reduced_residual",
    "reduced_jacobian",
    "rom_solve",
]

STRATEGIES = (
    "direct-projection",
    "tensorial",
    "directional-derivative",
    "deim",
    "smdeim",
    "mdeim-reference",
)


@dataclass(frozen=True)
class TensorCore:
    """Exact reduced-space form of one quadratic operator.

    rhs(xt) = const + lin @ xt + quad contraction; jacobian(xt) is its exact
    derivative.  const and the mean contribution inside lin vanish for an
    uncentered basis.
    """

    const: np.ndarray
    lin: np.ndarray
    quad: np.ndarray

    @property
    def k(self):
        return int(self.lin.shape[0])

    def rhs(self, xt):
        qx = np.tensordot(self.quad, xt, axes=([2], [0]))
        return self.const + self.lin @ xt + qx @ xt

    def jacobian(self, xt):
        term_a = np.tensordot(self.quad, xt, axes=([2], [0]))
        term_b = np.tensordot(self.quad, xt, axes=([1], [0]))
        return self.lin + term_a + term_b


def build_tensor_core(op, basis):
    """Project a quadratic operator onto the basis, exactly."""
    u = basis.u
    mean = basis.mean
    const = u.T @ op.rhs(mean)
    lin = op.reduced_linear(u, mean)
    quad = op.reduced_quadratic_tensor(u)
    return TensorCore(const=const, lin=lin, quad=quad)


class TensorialJacobian:
    needs_lift = False

    def __init__(self, core):
        self.core = core

    def evaluate(self, xt, x_full=None):
        return self.core.jacobian(xt)


class DirectProjectionJacobian:
    needs_lift = True

    def __init__(self, op, u):
        self.op = op
        self.u = u

    def evaluate(self, xt, x_full):
        return self.u.T @ (self.op.jacobian(x_full) @ self.u)


class DirectionalDerivativeJacobian:
    """Forward difference (F(x + h u_j) - F(x)) / h, projected."""

    needs_lift = True

    def __init__(self, op, u, h=0.01):
        self.op = op
        self.u = u
        self.h = float(h)

    def evaluate(self, xt, x_full):
        f_base = self.op.rhs(x_full)
        k = self.u.shape[1]
        diffs = np.empty((self.u.shape[0], k))
        for j in range(k):
            diffs[:, j] = (self.op.rhs(x_full + self.h * self.u[:, j]) - f_base) / self.h
        return self.u.T @ diffs


class DeimFunctionJacobian:
    """Sampled rows of the nonlinear Jacobian through a function-snapshot
    interpolant; the linear part is projected exactly offline."""

    needs_lift = True

    def __init__(self, op, u, fn_interp, lin_reduced):
        self.op = op
        self.u = u
        self.indexes = fn_interp.indexes
        self.left = u.T @ fn_interp.projector
        self.lin_reduced = lin_reduced

    @classmethod
    def from_parts(cls, op, u, indexes, left, lin_reduced):
        """Rebuild from persisted offline products."""
        obj = cls.__new__(cls)
        obj.op = op
        obj.u = u
        obj.indexes = indexes
        obj.left = left
        obj.lin_reduced = lin_reduced
        return obj

    def evaluate(self, xt, x_full):
        rows = self.op.sample_nl_rows(x_full, self.indexes)
        return self.lin_reduced + self.left @ (rows @ self.u)


class MatrixInterpolantJacobian:
    """Entry-sampled full-Jacobian interpolation contracted to k-by-k.

    The contraction matrix has row (j + k l) equal to u_j(rows) (.) u_l(cols)
    over the interpolant's coordinate list; multiplying the precomputed
    product by the m sampled entries and reshaping column-major yields the
    reduced Jacobian in O(k^2 m) online work.
    """

    needs_lift = True

    def __init__(self, op, u, mi):
        self.op = op
        k = u.shape[1]
        if mi.mode == "sparse":
            factor = np.einsum(
                "qj,ql->ljq", u[mi.pattern.rows], u[mi.pattern.cols]
            ).reshape(k * k, -1)
        else:
            n = mi.pattern.n
            factor = np.einsum("aj,bl->ljba", u, u).reshape(k * k, n * n)
        self.reducer = np.ascontiguousarray(factor @ mi.interp.projector)
        self.sample_rows = mi.sample_rows
        self.sample_cols = mi.sample_cols
        self.k = k

    @classmethod
    def from_parts(cls, op, k, reducer, sample_rows, sample_cols):
        """Rebuild from persisted offline products."""
        obj = cls.__new__(cls)
        obj.op = op
        obj.k = int(k)
        obj.reducer = reducer
        obj.sample_rows = sample_rows
        obj.sample_cols = sample_cols
        return obj

    def evaluate(self, xt, x_full):
        samples = self.op.sample_jacobian(x_full, self.sample_rows, self.sample_cols)
        instrumentation.bump("reduced_jacobian_flops", 2 * self.reducer.size)
        return (self.reducer @ samples).reshape((self.k, self.k), order="F")


@dataclass
class ReducedStage:
    name: str
    fraction: float
    core: TensorCore
    explicit_core: TensorCore | None
    jacobian: object


@dataclass
class ReducedModel:
    model_id: str
    config_hash: str
    strategy: str
    basis: PodBasis
    dt: float
    stages: list
    initial_reduced: np.ndarray
    newton_tol: float = 1e-10
    newton_cap: int = 50
    offline_seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def k(self):
        return int(self.basis.k)


def reduce_model(
    model,
    basis,
    strategy,
    snapshots=None,
    m=None,
    h=0.01,
    guard_n=None,
    newton_tol=1e-10,
    newton_cap=50,
    prebuilt=None,
):
    """Build a ReducedModel for one Jacobian strategy.

    snapshots: per-stage SnapshotSet list (as produced by full_solve),
    required by the deim/smdeim/mdeim-reference strategies.  m is the number
    of interpolation modes for those strategies.  prebuilt optionally maps a
    stage index to an already constructed MatrixInterpolant, letting callers
    reuse an expensive build; entries must match the requested strategy mode.
    The offline wall time (tensor projection plus interpolant training) is
    recorded on the result.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; pick one of {STRATEGIES}")
    needs_data = strategy in ("deim", "smdeim", "mdeim-reference")
    if needs_data:
        if snapshots is None:
            raise ValueError(f"strategy {strategy!r} requires snapshot sets")
        if m is None:
            raise ValueError(f"strategy {strategy!r} requires the mode count m")
        if len(snapshots) != len(model.stages):
            raise ValueError("need one snapshot set per stage")
    u = basis.u
    t_start = time.perf_counter()
    cores = {}
    for stage in model.stages:
        if id(stage.op) not in cores:
            cores[id(stage.op)] = build_tensor_core(stage.op, basis)
        if stage.explicit is not None and id(stage.explicit) not in cores:
            cores[id(stage.explicit)] = build_tensor_core(stage.explicit, basis)

    stages = []
    for s_idx, stage in enumerate(model.stages):
        core = cores[id(stage.op)]
        if strategy == "tensorial":
            jac = TensorialJacobian(core)
        elif strategy == "direct-projection":
            jac = DirectProjectionJacobian(stage.op, u)
        elif strategy == "directional-derivative":
            jac = DirectionalDerivativeJacobian(stage.op, u, h=h)
        elif strategy == "deim":
            snap = snapshots[s_idx]
            svd = thin_svd(snap.nonlinear)
            if m > svd.rank:
                raise RankError(
                    f"m={m} exceeds the numerical rank {svd.rank} of the "
                    "nonlinear-term snapshots"
                )
            fn_interp = deim_interpolant(svd.u, m)
            lin_reduced = u.T @ (stage.op.linear @ u)
            jac = DeimFunctionJacobian(stage.op, u, fn_interp, lin_reduced)
        else:
            if prebuilt is not None and s_idx in prebuilt:
                mi = prebuilt[s_idx]
            elif strategy == "smdeim":
                mi = build_smdeim(snapshots[s_idx], m)
            else:
                mi = build_mdeim_reference(snapshots[s_idx], m, guard_n=guard_n)
            jac = MatrixInterpolantJacobian(stage.op, u, mi)
        stages.append(
            ReducedStage(
                name=stage.name,
                fraction=stage.fraction,
                core=core,
                explicit_core=(
                    cores[id(stage.explicit)] if stage.explicit is not None else None
                ),
                jacobian=jac,
            )
        )
    offline = time.perf_counter() - t_start
    return ReducedModel(
        model_id=model.model_id,
        config_hash=model.config_hash,
        strategy=strategy,
        basis=basis,
        dt=model.dt,
        stages=stages,
        initial_reduced=basis.project(model.initial_state),
        newton_tol=newton_tol,
        newton_cap=newton_cap,
        offline_seconds=offline,
        meta={"m": m, "h": h},
    )


def reduced_residual(rm, xt, xt_prev, dt=None, stage=0):
    """Stage residual xt - b - fraction dt F_red(xt) in reduced coordinates."""
    st = rm.stages[stage]
    if dt is None:
        dt = rm.dt
    coef = st.fraction * dt
    if st.explicit_core is not None:
        b = xt_prev + coef * st.explicit_core.rhs(xt_prev)
    else:
        b = xt_prev
    return xt - b - coef * st.core.rhs(xt)


def reduced_jacobian(rm, xt, stage=0):
    """Reduced Jacobian of the stage operator at xt, per the model strategy."""
    st = rm.stages[stage]
    x_full = rm.basis.lift(xt) if st.jacobian.needs_lift else None
    return st.jacobian.evaluate(xt, x_full)


def _solve_reduced_stage(rm, st, xt_from, b, record):
    coef = st.fraction * rm.dt
    eye = np.eye(rm.k)
    xt = xt_from.copy()
    norms = []
    iters = 0
    residual = xt - b - coef * st.core.rhs(xt)
    while True:
        iters += 1
        if record is not None:
            record.append(xt.copy())
        x_full = rm.basis.lift(xt) if st.jacobian.needs_lift else None
        jac = st.jacobian.evaluate(xt, x_full)
        delta = solve_dense(eye - coef * jac, -residual)
        xt = xt + delta
        residual = xt - b - coef * st.core.rhs(xt)
        norm = float(np.linalg.norm(residual))
        norms.append(norm)
        if norm <= rm.newton_tol:
            return xt, iters, norms, True
        if iters >= rm.newton_cap:
            return xt, iters, norms, False


def rom_solve(rm, n_t, x0=None, continue_on_failure=False, record_iterates=False,
              newton_guess="initial"):
    """Advance the reduced model for n_t time points.

    Returns (trajectory, stats): trajectory is (k, n_t) in reduced
    coordinates with the initial column included.  On Newton failure the run
    either raises (default) or records the failure and continues with the
    unconverged state, per continue_on_failure.  With record_iterates=True,
    stats.meta["iterates"] collects every reduced state at which a Newton
    matrix was evaluated, per solve.  newton_guess picks the starting
    iterate of every stage solve, as in models.full_solve: "initial"
    (default) restarts from the run's first reduced state, "previous"
    warm-starts, "zero" starts cold.
    """
    if n_t < 1:
        raise ValueError("n_t must be at least 1")
    if newton_guess not in ("initial", "previous", "zero"):
        raise ValueError(f"unknown newton_guess {newton_guess!r}")
    xt = np.array(rm.initial_reduced if x0 is None else x0, dtype=np.float64)
    xt_init = xt.copy()
    trajectory = np.empty((rm.k, n_t))
    trajectory[:, 0] = xt
    stats = NewtonStats(offline_seconds=rm.offline_seconds)
    all_iterates = [] if record_iterates else None
    t_start = time.perf_counter()
    for step in range(1, n_t):
        for st in rm.stages:
            coef = st.fraction * rm.dt
            if st.explicit_core is not None:
                b = xt + coef * st.explicit_core.rhs(xt)
            else:
                b = xt
            record = [] if record_iterates else None
            if newton_guess == "previous":
                start = xt
            elif newton_guess == "initial":
                start = xt_init
            else:
                start = np.zeros_like(xt)
            xt, iters, norms, ok = _solve_reduced_stage(rm, st, start, b, record)
            stats.iterations.append(iters)
            stats.residual_norms.append(norms)
            if record_iterates:
                all_iterates.append(record)
            if not ok:
                if not continue_on_failure:
                    raise NewtonConvergenceError(step, st.name, norms[-1], rm.newton_cap)
                stats.failures.append((step, st.name, norms[-1]))
        trajectory[:, step] = xt
    stats.online_seconds = time.perf_counter() - t_start
    if record_iterates:
        stats.meta = {"iterates": all_iterates}
    return trajectory, stats
