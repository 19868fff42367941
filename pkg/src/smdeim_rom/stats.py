"""Iteration statistics shared by the full-order and reduced solvers."""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["NewtonStats", "NewtonConvergenceError"]


class NewtonConvergenceError(RuntimeError):
    """Newton failed to reach tolerance within the iteration cap."""

    def __init__(self, step, stage, residual, cap):
        self.step = step
        self.stage = stage
        self.residual = residual
        super().__init__(
            f"Newton did not converge at step {step}"
            + (f" (stage {stage!r})" if stage else "")
            + f": residual {residual:.3e} after {cap} iterations"
        )


@dataclass
class NewtonStats:
    """Per-solve iteration counts and residual histories for one run.

    One entry per implicit solve: single-stage models do one solve per step,
    the alternating-direction model does two.  failures lists
    (step, stage, final_residual) for solves that hit the cap when the run
    was configured to continue past them.
    """

    iterations: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    offline_seconds: float = 0.0
    online_seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def mean_iterations(self):
        if not self.iterations:
            return 0.0
        return float(np.mean(self.iterations))

    @property
    def total_solves(self):
        return len(self.iterations)
