"""
Run descriptions and their outcomes. A ``SolverRun`` is a complete, immutable recipe
for one replication; a ``Trajectory`` is what running it produced.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from django.utils.translation import gettext_lazy as _

from apps.geometry.models import ConvexSet, LinearMonotoneOperator, Regularizer
from apps.problems.models import FiniteSumProblem
from sgm_lab.exceptions import ProblemError

SGM = "sgm"
PSGM = "psgm"
PROX_SGM = "prox_sgm"
RESOLVENT_SGM = "resolvent_sgm"
METHODS = (SGM, PSGM, PROX_SGM, RESOLVENT_SGM)

GEOMETRY_FOR_METHOD = {
    SGM: ConvexSet,
    PSGM: ConvexSet,
    PROX_SGM: Regularizer,
    RESOLVENT_SGM: LinearMonotoneOperator,
}

MAX_STORED_POINTS = 10_000


def default_geometry(method, dim):
    if method in (SGM, PSGM):
        return ConvexSet.whole_space()
    if method == PROX_SGM:
        return Regularizer.zero()
    return LinearMonotoneOperator.zero(dim)


def check_method_geometry(method, geometry):
    if method not in METHODS:
        raise ProblemError(_("Unknown method '%(method)s'.") % {"method": method})
    expected = GEOMETRY_FOR_METHOD[method]
    if not isinstance(geometry, expected):
        raise ProblemError(
            _("Method %(method)s needs a %(expected)s, got %(got)s.")
            % {"method": method, "expected": expected.__name__, "got": type(geometry).__name__}
        )
    if method == SGM and not geometry.is_whole_space:
        raise ProblemError(_("Plain sgm runs on the whole space; use psgm for a constraint set."))


@dataclass(frozen=True)
class StepPolicy:
    CONSTANT = "constant"
    INVERSE_T = "inverse_t"

    kind: str
    gamma: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.kind == self.CONSTANT:
            if not self.gamma > 0:
                raise ProblemError(_("A constant step must be positive."))
        elif self.kind == self.INVERSE_T:
            if not self.c > 0:
                raise ProblemError(_("The inverse_t constant c must be positive."))
        else:
            raise ProblemError(_("Unknown step policy '%(kind)s'.") % {"kind": self.kind})

    @classmethod
    def constant(cls, gamma):
        return cls(kind=cls.CONSTANT, gamma=float(gamma))

    @classmethod
    def inverse_t(cls, c):
        """gamma_t = c / (1 + t)."""
        return cls(kind=cls.INVERSE_T, c=float(c))

    @property
    def is_constant(self):
        return self.kind == self.CONSTANT

    @property
    def initial(self):
        return self.value(0)

    def value(self, t):
        if self.kind == self.CONSTANT:
            return self.gamma
        return self.c / (1.0 + t)

    def values(self, iterations):
        """gamma_0 .. gamma_{iterations-1}."""
        if self.kind == self.CONSTANT:
            return np.full(iterations, self.gamma)
        return self.c / (1.0 + np.arange(iterations, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class SolverRun:
    method: str
    problem: FiniteSumProblem
    geometry: object
    step: StepPolicy
    iters: int
    seed: int
    x0: Optional[np.ndarray] = None
    replication: int = 0
    record_points: bool = True
    # Distances are measured to this point when given, else to the problem's solution set.
    reference: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        check_method_geometry(self.method, self.geometry)
        if self.iters < 1:
            raise ProblemError(_("The iteration budget must be at least 1."))
        if not 0 <= self.seed < 2**64:
            raise ProblemError(_("The seed must be a 64-bit unsigned integer."))
        if self.x0 is not None:
            x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
            if x0.shape != (self.problem.dim,):
                raise ProblemError(_("x0 must have the problem's dimension."))
            object.__setattr__(self, "x0", x0)
        if self.reference is not None:
            object.__setattr__(self, "reference", np.asarray(self.reference, dtype=np.float64))

    def initial_point(self):
        """x0 if given, else the zero vector mapped into the feasible region."""
        if self.x0 is not None:
            return self.x0.copy()
        zero = np.zeros(self.problem.dim)
        if self.method in (SGM, PSGM):
            return self.geometry.project(zero)
        if self.method == PROX_SGM:
            return self.geometry.prox(self.step.initial, zero)
        return zero

    def distance_target(self, X):
        if self.reference is not None:
            return np.broadcast_to(self.reference, np.shape(X))
        return self.problem.solution_projector(X)

    @property
    def thinning_stride(self):
        if self.iters <= MAX_STORED_POINTS:
            return 1
        return math.ceil(self.iters / MAX_STORED_POINTS)

    def with_replication(self, replication, **changes):
        return replace(self, replication=replication, **changes)


@dataclass(eq=False)
class Trajectory:
    points: np.ndarray
    point_times: np.ndarray
    dist_sq: np.ndarray
    sampled_indices: Optional[np.ndarray]
    step_values: np.ndarray
    replication: int
    seed: int
    method: str

    def __post_init__(self):
        if len(self.points) != len(self.point_times):
            raise ValueError("points and point_times differ in length")
        if self.sampled_indices is not None and len(self.sampled_indices) != self.T:
            raise ValueError("one sampled index per iteration is required")
        if len(self.step_values) != self.T:
            raise ValueError("one step value per iteration is required")

    @property
    def T(self):
        return len(self.dist_sq) - 1

    @property
    def final_point(self):
        return self.points[-1]

    def head(self, steps):
        """The first ``steps`` iterations; stored points are kept up to time ``steps``."""
        if steps >= self.T:
            return self
        keep = np.asarray(self.point_times) <= steps
        return Trajectory(
            points=self.points[keep],
            point_times=np.asarray(self.point_times)[keep],
            dist_sq=self.dist_sq[: steps + 1],
            sampled_indices=None if self.sampled_indices is None else self.sampled_indices[:steps],
            step_values=self.step_values[:steps],
            replication=self.replication,
            seed=self.seed,
            method=self.method,
        )


@dataclass
class ContractionAudit:
    """Exact one-step check E_i||x+ - xbar+||^2 <= (1 - rho)||x - xbar||^2 + gamma^2 sigma1^2."""

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    tolerance: float = 1e-9

    @property
    def margins(self):
        return self.rhs - self.lhs

    @property
    def violations(self):
        bad = self.margins < -self.tolerance * (1.0 + np.abs(self.rhs))
        return self.times[bad]

    @property
    def holds(self):
        return len(self.violations) == 0
