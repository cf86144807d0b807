"""
The g / C / A side of every iteration: closed convex sets with exact projections,
regularisers with closed-form proximity operators, and linear monotone operators
with exact resolvents. Every method accepts one point of shape (d,) or a block of
rows of shape (R, d).
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from django.utils.translation import gettext_lazy as _

from sgm_lab.exceptions import NumericalError, ProblemError
from sgm_lab.util import rowdot, rows_matvec, sq_norms

RESOLVENT_CONDITION_LIMIT = 1e12
PSD_TOLERANCE = 1e-12


def _vector(values):
    return np.atleast_1d(np.asarray(values, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class ConvexSet:
    WHOLE_SPACE = "whole_space"
    HYPERPLANE = "hyperplane"
    HALFSPACE = "halfspace"
    BOX = "box"
    BALL = "ball"
    AFFINE = "affine"
    KINDS = (WHOLE_SPACE, HYPERPLANE, HALFSPACE, BOX, BALL, AFFINE)

    kind: str
    a: Optional[np.ndarray] = None
    b: Optional[float] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    _projector: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _offset: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ProblemError(_("Unknown convex set kind '%(kind)s'.") % {"kind": self.kind})
        if self.kind in (self.HYPERPLANE, self.HALFSPACE):
            a = _vector(self.a)
            if not np.any(a):
                raise ProblemError(_("The normal vector of a hyperplane or halfspace must be nonzero."))
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", float(self.b))
        elif self.kind == self.BOX:
            lo, hi = _vector(self.lo), _vector(self.hi)
            if lo.shape != hi.shape:
                raise ProblemError(_("Box bounds must have the same length."))
            if np.any(lo > hi):
                raise ProblemError(_("Empty box: some lower bound exceeds its upper bound."))
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        elif self.kind == self.BALL:
            if self.radius is None or not self.radius > 0:
                raise ProblemError(_("Ball radius must be positive."))
            object.__setattr__(self, "center", _vector(self.center))
            object.__setattr__(self, "radius", float(self.radius))
        elif self.kind == self.AFFINE:
            self._build_affine_projector()

    def _build_affine_projector(self):
        A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=np.float64))
        b_eq = _vector(self.b_eq)
        k, d = A_eq.shape
        if b_eq.shape != (k,):
            raise ProblemError(_("Affine constraints need one right-hand side per row."))
        if k > d:
            raise ProblemError(_("Affine constraints must have full row rank."))
        Q, R = np.linalg.qr(A_eq.T)
        diagonal = np.abs(np.diag(R))
        if np.any(diagonal <= 1e-12 * max(1.0, diagonal.max())):
            raise ProblemError(_("Affine constraints must have full row rank."))
        object.__setattr__(self, "A_eq", A_eq)
        object.__setattr__(self, "b_eq", b_eq)
        object.__setattr__(self, "_projector", np.eye(d) - Q @ Q.T)
        object.__setattr__(self, "_offset", Q @ np.linalg.solve(R.T, b_eq))

    @classmethod
    def whole_space(cls):
        return cls(kind=cls.WHOLE_SPACE)

    @classmethod
    def hyperplane(cls, a, b):
        return cls(kind=cls.HYPERPLANE, a=a, b=b)

    @classmethod
    def halfspace(cls, a, b):
        """{x : <a, x> <= b}"""
        return cls(kind=cls.HALFSPACE, a=a, b=b)

    @classmethod
    def box(cls, lo, hi):
        return cls(kind=cls.BOX, lo=lo, hi=hi)

    @classmethod
    def ball(cls, center, radius):
        return cls(kind=cls.BALL, center=center, radius=radius)

    @classmethod
    def affine(cls, A_eq, b_eq):
        return cls(kind=cls.AFFINE, A_eq=A_eq, b_eq=b_eq)

    @property
    def is_whole_space(self):
        return self.kind == self.WHOLE_SPACE

    def project(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == self.WHOLE_SPACE:
            return x
        if self.kind == self.HYPERPLANE:
            shift = (rowdot(x, self.a) - self.b) / rowdot(self.a, self.a)
            return x - np.asarray(shift)[..., np.newaxis] * self.a
        if self.kind == self.HALFSPACE:
            excess = np.maximum(rowdot(x, self.a) - self.b, 0.0) / rowdot(self.a, self.a)
            return x - np.asarray(excess)[..., np.newaxis] * self.a
        if self.kind == self.BOX:
            return np.clip(x, self.lo, self.hi)
        if self.kind == self.BALL:
            offset = x - self.center
            norm = np.sqrt(sq_norms(offset))
            outside = norm > self.radius
            scale = np.where(outside, self.radius / np.where(outside, norm, 1.0), 1.0)
            return self.center + offset * np.asarray(scale)[..., np.newaxis]
        return rows_matvec(self._projector, x) + self._offset

    def contains(self, x, tolerance=1e-10):
        x = np.asarray(x, dtype=np.float64)
        gap = np.sqrt(sq_norms(self.project(x) - x))
        return bool(np.all(gap <= tolerance * (1.0 + np.sqrt(sq_norms(x)))))


@dataclass(frozen=True, eq=False)
class Regularizer:
    ZERO = "zero"
    CONSTANT = "constant"
    L1 = "l1"
    INDICATOR = "indicator"
    QUADRATIC = "quadratic"
    KINDS = (ZERO, CONSTANT, L1, INDICATOR, QUADRATIC)

    kind: str
    constant: float = 0.0
    weight: float = 0.0
    convex_set: Optional[ConvexSet] = None
    Q_psd: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    _eigenvalues: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _eigenvectors: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ProblemError(_("Unknown regulariser kind '%(kind)s'.") % {"kind": self.kind})
        if self.kind == self.L1 and not self.weight >= 0:
            raise ProblemError(_("The l1 weight must be nonnegative."))
        if self.kind == self.INDICATOR and not isinstance(self.convex_set, ConvexSet):
            raise ProblemError(_("An indicator regulariser needs a convex set."))
        if self.kind == self.QUADRATIC:
            Q = np.atleast_2d(np.asarray(self.Q_psd, dtype=np.float64))
            if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, atol=1e-12):
                raise ProblemError(_("The quadratic term must be a symmetric matrix."))
            eigenvalues, eigenvectors = np.linalg.eigh(Q)
            if eigenvalues[0] < -PSD_TOLERANCE * max(1.0, abs(eigenvalues[-1])):
                raise ProblemError(_("The quadratic term must be positive semidefinite."))
            q = np.zeros(Q.shape[0]) if self.q is None else _vector(self.q)
            object.__setattr__(self, "Q_psd", Q)
            object.__setattr__(self, "q", q)
            object.__setattr__(self, "_eigenvalues", np.maximum(eigenvalues, 0.0))
            object.__setattr__(self, "_eigenvectors", eigenvectors)

    @classmethod
    def zero(cls):
        return cls(kind=cls.ZERO)

    @classmethod
    def constant_function(cls, value):
        return cls(kind=cls.CONSTANT, constant=float(value))

    @classmethod
    def l1(cls, weight):
        return cls(kind=cls.L1, weight=float(weight))

    @classmethod
    def indicator(cls, convex_set):
        return cls(kind=cls.INDICATOR, convex_set=convex_set)

    @classmethod
    def quadratic(cls, Q_psd, q=None, constant=0.0):
        """g(x) = 0.5 x^T Q x + <q, x> + constant."""
        return cls(kind=cls.QUADRATIC, Q_psd=Q_psd, q=q, constant=float(constant))

    @classmethod
    def affine(cls, Q, constant=0.0):
        """g(x) = <Q, x> + constant, whose subdifferential is the single vector Q."""
        Q = _vector(Q)
        return cls.quadratic(np.zeros((Q.size, Q.size)), Q, constant)

    @property
    def is_constant(self):
        if self.kind in (self.ZERO, self.CONSTANT):
            return True
        return self.kind == self.INDICATOR and self.convex_set.is_whole_space

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == self.ZERO:
            return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
        if self.kind == self.CONSTANT:
            return np.full(x.shape[:-1], self.constant) if x.ndim > 1 else self.constant
        if self.kind == self.L1:
            return self.weight * np.sum(np.abs(x), axis=-1)
        if self.kind == self.INDICATOR:
            inside = np.sqrt(sq_norms(self.convex_set.project(x) - x)) <= 1e-10
            return np.where(inside, 0.0, np.inf)
        return 0.5 * rowdot(x, rows_matvec(self.Q_psd, x)) + rowdot(x, self.q) + self.constant

    def prox(self, gamma, x):
        """argmin_y g(y) + ||y - x||^2 / (2 gamma)."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind in (self.ZERO, self.CONSTANT):
            return x
        if self.kind == self.L1:
            return np.sign(x) * np.maximum(np.abs(x) - gamma * self.weight, 0.0)
        if self.kind == self.INDICATOR:
            return self.convex_set.project(x)
        V = self._eigenvectors
        coefficients = rows_matvec(V.T, x - gamma * self.q) / (1.0 + gamma * self._eigenvalues)
        return rows_matvec(V, coefficients)

    def contains_subgradient(self, y, u, tolerance=1e-9):
        """Analytic check of u in the subdifferential of g at y, per kind."""
        y = np.asarray(y, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        scale = 1.0 + np.max(np.abs(u), initial=0.0)
        if self.kind in (self.ZERO, self.CONSTANT):
            return bool(np.all(np.abs(u) <= tolerance * scale))
        if self.kind == self.L1:
            active = y != 0.0
            on_support = np.abs(u - self.weight * np.sign(y)) <= tolerance * scale
            off_support = np.abs(u) <= self.weight + tolerance * scale
            return bool(np.all(np.where(active, on_support, off_support)))
        if self.kind == self.INDICATOR:
            # u is a normal vector at y exactly when y = P_C(y + u).
            if not self.convex_set.contains(y, tolerance):
                return False
            moved = self.convex_set.project(y + u)
            return bool(np.all(np.abs(moved - y) <= tolerance * scale))
        expected = rows_matvec(self.Q_psd, y) + self.q
        return bool(np.all(np.abs(u - expected) <= tolerance * scale))


@dataclass(frozen=True, eq=False)
class LinearMonotoneOperator:
    """
    x -> M_op x with M_op + M_op^T positive semidefinite. ``cocoercivity_beta`` and
    ``strong_monotonicity`` are verified at construction when positive.
    """

    M_op: np.ndarray
    cocoercivity_beta: float = 0.0
    strong_monotonicity: float = 0.0
    _last_inverse: Optional[tuple] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M_op, dtype=np.float64))
        if M.shape[0] != M.shape[1]:
            raise ProblemError(_("A linear operator on R^d needs a square matrix."))
        object.__setattr__(self, "M_op", M)
        sym = 0.5 * (M + M.T)
        scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
        if np.linalg.eigvalsh(sym)[0] < -PSD_TOLERANCE * scale:
            raise ProblemError(_("The operator is not monotone: M + M^T is not positive semidefinite."))
        if self.cocoercivity_beta < 0 or self.strong_monotonicity < 0:
            raise ProblemError(_("Cocoercivity and strong monotonicity constants must be nonnegative."))
        if self.cocoercivity_beta > 0:
            slack = np.linalg.eigvalsh(sym - self.cocoercivity_beta * (M.T @ M))[0]
            if slack < -1e-10 * scale:
                raise ProblemError(
                    _("The operator is not %(beta)g-cocoercive.") % {"beta": self.cocoercivity_beta}
                )
        if self.strong_monotonicity > 0:
            slack = np.linalg.eigvalsh(sym)[0] - self.strong_monotonicity
            if slack < -1e-10 * scale:
                raise ProblemError(
                    _("The operator is not %(s)g-strongly monotone.") % {"s": self.strong_monotonicity}
                )

    @classmethod
    def zero(cls, dim):
        return cls(M_op=np.zeros((dim, dim)))

    @classmethod
    def scaled_identity(cls, dim, scale):
        if scale == 0:
            return cls.zero(dim)
        return cls(M_op=scale * np.eye(dim), cocoercivity_beta=1.0 / scale, strong_monotonicity=scale)

    @classmethod
    def skew(cls, dim, scale=1.0, seed=0):
        """scale * (S - S^T) for a seeded Gaussian S: monotone but never cocoercive."""
        S = np.random.default_rng(seed).standard_normal((dim, dim))
        return cls(M_op=scale * (S - S.T))

    @classmethod
    def from_symmetric(cls, M):
        """Symmetric PSD M is 1/lambda_max-cocoercive and lambda_min-strongly monotone."""
        M = np.atleast_2d(np.asarray(M, dtype=np.float64))
        eigenvalues = np.linalg.eigvalsh(0.5 * (M + M.T))
        beta = 1.0 / eigenvalues[-1] if eigenvalues[-1] > 0 else 0.0
        return cls(
            M_op=M,
            cocoercivity_beta=beta * (1 - 1e-12),
            strong_monotonicity=max(float(eigenvalues[0]) * (1 - 1e-12), 0.0),
        )

    @property
    def is_zero(self):
        return not np.any(self.M_op)

    @property
    def dim(self):
        return self.M_op.shape[0]

    def apply(self, x):
        return rows_matvec(self.M_op, x)

    def _resolvent_matrix(self, gamma):
        # One entry: constant steps reuse it, decaying steps replace it.
        cached = self._last_inverse
        if cached is not None and cached[0] == gamma:
            return cached[1]
        system = np.eye(self.dim) + gamma * self.M_op
        condition = np.linalg.cond(system)
        if not condition <= RESOLVENT_CONDITION_LIMIT:
            raise NumericalError(
                _("Resolvent system is ill-conditioned (condition estimate %(c).3e).") % {"c": condition}
            )
        inverse = np.linalg.inv(system)
        object.__setattr__(self, "_last_inverse", (gamma, inverse))
        return inverse

    def resolvent(self, gamma, x):
        """(I + gamma M_op)^{-1} x, with the inverse kept for the last gamma seen."""
        x = np.asarray(x, dtype=np.float64)
        if self.is_zero:
            return x
        return rows_matvec(self._resolvent_matrix(gamma), x)
