"""Functional entry points used by the solvers; each dispatches to the model's method."""
import numpy as np

from apps.geometry.models import ConvexSet, LinearMonotoneOperator, Regularizer


def project(convex_set: ConvexSet, x):
    return convex_set.project(x)


def prox(regularizer: Regularizer, gamma, x):
    return regularizer.prox(gamma, x)


def resolvent(operator: LinearMonotoneOperator, gamma, x):
    return operator.resolvent(gamma, x)


def check_projection(convex_set, probes, tolerance=1e-10):
    """
    Variational inequality <x - P(x), c - P(x)> <= 0 tested against the projections
    of the other probes. Returns the number of violating pairs.
    """
    projected = convex_set.project(np.asarray(probes, dtype=np.float64))
    if not convex_set.contains(projected):
        return len(projected)
    violations = 0
    for x, p in zip(probes, projected):
        inner = (projected - p) @ (x - p)
        scale = 1.0 + np.linalg.norm(x - p) * (1.0 + np.max(np.linalg.norm(projected - p, axis=1)))
        violations += int(np.any(inner > tolerance * scale))
    return violations


def check_prox_optimality(regularizer, gamma, probes, tolerance=1e-9):
    """(x - prox(x)) / gamma must be a subgradient of g at prox(x) for every probe."""
    failures = 0
    for x in np.asarray(probes, dtype=np.float64):
        y = regularizer.prox(gamma, x)
        if not regularizer.contains_subgradient(y, (x - y) / gamma, tolerance):
            failures += 1
    return failures
