"""
Finite-sum stochastic problems f = (1/n) sum_i f_i with uniform sampling over the
components. Everything here is an immutable in-memory object; nothing is persisted.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from django.utils.translation import gettext_lazy as _

from sgm_lab.exceptions import ProblemError
from sgm_lab.util import as_rows, fixed_order_mean, rowdot, rows_matvec, sq_norms


class HyperplaneComponent:
    """f_i(x) = 0.5 (<a, x> - b)^2, i.e. half the squared distance to {<a, x> = b} for unit a."""

    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=np.float64)
        self.b = float(b)

    def value(self, x):
        r = rowdot(x, self.a) - self.b
        return 0.5 * r * r

    def gradient(self, x):
        r = rowdot(x, self.a) - self.b
        return np.asarray(r)[..., np.newaxis] * self.a


class QuadraticComponent:
    """f_i(x) = 0.5 x^T H x - c^T x + k with H symmetric positive semidefinite."""

    def __init__(self, H, c, k=0.0):
        self.H = np.atleast_2d(np.asarray(H, dtype=np.float64))
        self.c = np.atleast_1d(np.asarray(c, dtype=np.float64))
        self.k = float(k)

    def value(self, x):
        return 0.5 * rowdot(x, rows_matvec(self.H, x)) - rowdot(x, self.c) + self.k

    def gradient(self, x):
        return rows_matvec(self.H, x) - self.c


class CallableComponent:
    """Caller-supplied component; its constants are validated on probes, never inferred."""

    def __init__(self, value_fn, gradient_fn):
        self.value_fn = value_fn
        self.gradient_fn = gradient_fn

    def value(self, x):
        rows, single = as_rows(x)
        values = np.array([float(self.value_fn(row)) for row in rows])
        return values[0] if single else values

    def gradient(self, x):
        rows, single = as_rows(x)
        grads = np.array([np.asarray(self.gradient_fn(row), dtype=np.float64) for row in rows])
        return grads[0] if single else grads


class PointSolution:
    """Projector onto a singleton solution set {x_star}."""

    def __init__(self, x_star):
        self.x_star = np.asarray(x_star, dtype=np.float64)

    def __call__(self, x):
        return np.broadcast_to(self.x_star, np.shape(x)).copy()


@dataclass(frozen=True, eq=False)
class FiniteSumProblem:
    dim: int
    components: Tuple[object, ...]
    lipschitz_L: float
    per_component_L0: float
    strong_mu: float
    restricted_mu: float
    f_star: float
    solution_projector: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __post_init__(self):
        if self.dim < 1:
            raise ProblemError(_("Problem dimension must be a positive integer."))
        if len(self.components) < 1:
            raise ProblemError(_("A finite-sum problem needs at least one component."))
        for label in ("lipschitz_L", "per_component_L0", "strong_mu", "restricted_mu"):
            if getattr(self, label) < 0:
                raise ProblemError(_("%(label)s must be nonnegative.") % {"label": label})
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def n(self):
        return len(self.components)

    @property
    def mu(self):
        """The convexity modulus the convergence results use (restricted if asserted)."""
        return self.restricted_mu if self.restricted_mu > 0 else self.strong_mu

    @cached_property
    def _stack(self):
        kinds = {type(component) for component in self.components}
        if kinds == {HyperplaneComponent}:
            A = np.array([component.a for component in self.components])
            b = np.array([component.b for component in self.components])
            return ("rows", A, b)
        if kinds == {QuadraticComponent}:
            H = np.array([component.H for component in self.components])
            c = np.array([component.c for component in self.components])
            return ("quadratic", H, c)
        return ("loop", None, None)

    def value(self, x):
        values = np.array([component.value(x) for component in self.components])
        return fixed_order_mean(values)

    def gradient(self, x):
        grads = np.array([component.gradient(x) for component in self.components])
        return fixed_order_mean(grads)

    def batch_gradient(self, indices, X):
        """Gradient of component ``indices[r]`` at row ``X[r]`` for every row r."""
        kind, first, second = self._stack
        indices = np.asarray(indices)
        if kind == "rows":
            A = first[indices]
            residual = rowdot(A, X) - second[indices]
            return residual[:, np.newaxis] * A
        if kind == "quadratic":
            return rows_matvec(first[indices], X) - second[indices]
        return np.array(
            [self.components[i].gradient(row) for i, row in zip(indices, X)]
        )

    def component_gradients(self, x):
        """All n component gradients at the single point ``x`` as an (n, d) array."""
        x = np.asarray(x, dtype=np.float64)
        X = np.broadcast_to(x, (self.n, self.dim))
        return self.batch_gradient(np.arange(self.n), X)

    @cached_property
    def beta_sq(self):
        """
        Bound on E||grad f_i(x_bar)||^2 over solution points reached from the default
        probe grid (the constant called beta^2 in the Example 1 growth bound).
        """
        from apps.problems.services import exact_conditional_moment, probe_grid

        solutions = self.solution_projector(probe_grid(self.dim))
        return max(exact_conditional_moment(self, point)[1] for point in solutions)


@dataclass(frozen=True, eq=False)
class KaczmarzSystem:
    """
    Linear system with unit-norm rows a_i^T; C_i = {x : <a_i, x> = b_i}.
    """

    A: np.ndarray
    b: np.ndarray
    consistent: bool
    x_natural: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        m, d = A.shape
        if b.shape != (m,):
            raise ProblemError(_("Right-hand side must have one entry per row."))
        if m < d:
            raise ProblemError(
                _("Kaczmarz systems need at least as many rows as unknowns (m=%(m)d < d=%(d)d).")
                % {"m": m, "d": d}
            )
        if not np.all(np.abs(np.sqrt(sq_norms(A)) - 1.0) <= 1e-12):
            raise ProblemError(_("Every row of a Kaczmarz system must have unit norm."))
        if np.linalg.matrix_rank(A) < d:
            raise ProblemError(_("The system matrix must have full column rank."))
        residual = np.linalg.norm(A @ self.least_squares_solution - b)
        if self.consistent and residual > 1e-10:
            raise ProblemError(
                _("System flagged consistent but its least-squares residual is %(r).3e.")
                % {"r": residual}
            )

    @classmethod
    def from_rows(cls, A, b, consistent=None, x_natural=None):
        """Normalise rows to unit length, rescale b accordingly and detect consistency."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0.0):
            raise ProblemError(_("Kaczmarz systems cannot contain zero rows."))
        A = A / norms[:, np.newaxis]
        b = b / norms
        if consistent is None:
            x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
            consistent = bool(np.linalg.norm(A @ x_ls - b) <= 1e-10)
        return cls(A=A, b=b, consistent=consistent, x_natural=x_natural)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    @cached_property
    def least_squares_solution(self):
        """A^dagger b = (A^T A)^{-1} A^T b."""
        return np.linalg.solve(self.A.T @ self.A, self.A.T @ self.b)

    @cached_property
    def gram_spectrum(self):
        """Eigenvalues of A^T A in ascending order."""
        return np.linalg.eigvalsh(self.A.T @ self.A)
