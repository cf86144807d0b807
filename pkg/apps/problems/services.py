import logging

import numpy as np
from django.utils.translation import gettext_lazy as _

from apps.problems.models import (
    FiniteSumProblem,
    HyperplaneComponent,
    KaczmarzSystem,
    PointSolution,
    QuadraticComponent,
)
from sgm_lab.exceptions import NumericalError, ProblemError
from sgm_lab.util import fixed_order_mean, sq_norms

logger = logging.getLogger(__name__)

PROBE_COUNT = 32
PROBE_SCALES = (0.1, 1.0, 10.0)
FD_STEP = 1e-6


def probe_grid(dim, seed=0, count=PROBE_COUNT, scales=PROBE_SCALES, center=None):
    """Seeded standard-normal points, each set scaled by every entry of ``scales``."""
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((count, dim))
    grid = np.concatenate([scale * base for scale in scales])
    if center is not None:
        grid = grid + np.asarray(center, dtype=np.float64)
    return grid


def probe_descriptor(seed=0, count=PROBE_COUNT, scales=PROBE_SCALES):
    return {"seed": int(seed), "count": int(count), "scales": [float(s) for s in scales]}


def exact_conditional_moment(problem, x):
    """
    Exact E[grad K(x, xi)] and E||grad K(x, xi)||^2 under uniform sampling,
    by enumerating all components.
    """
    grads = problem.component_gradients(x)
    if not np.all(np.isfinite(grads)):
        raise NumericalError(_("A component gradient is not finite at the evaluation point."))
    mean_grad = fixed_order_mean(grads)
    second_moment = float(fixed_order_mean(sq_norms(grads)))
    return mean_grad, second_moment


def make_kaczmarz_problem(system):
    """Mean squared hyperplane distance f(x) = (1/2m) sum_i (<a_i, x> - b_i)^2."""
    if system.m < system.d:
        raise ProblemError(_("Kaczmarz problems need m >= d."))
    spectrum = system.gram_spectrum
    if spectrum[0] <= 1e-12 * spectrum[-1]:
        raise ProblemError(_("The system matrix is rank deficient."))
    m = system.m
    components = tuple(HyperplaneComponent(a, b) for a, b in zip(system.A, system.b))
    x_ls = system.least_squares_solution
    residual = system.A @ x_ls - system.b
    f_star = 0.0 if system.consistent else float(residual @ residual / (2 * m))
    # Restricted strong convexity modulus lambda_min(A^T A)/m is our construction.
    mu = float(spectrum[0] / m)
    return FiniteSumProblem(
        dim=system.d,
        components=components,
        lipschitz_L=float(spectrum[-1] / m),
        per_component_L0=float(np.max(sq_norms(system.A))),
        strong_mu=mu,
        restricted_mu=mu,
        f_star=f_star,
        solution_projector=PointSolution(x_ls),
        name="kaczmarz",
    )


def random_kaczmarz_system(rows, dim, seed=0, consistent=True, noise=0.1):
    """
    Seeded Gaussian system with normalised rows. Consistent systems use b = A x_natural;
    inconsistent ones add ``noise`` times a standard-normal perturbation.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((rows, dim))
    A = A / np.linalg.norm(A, axis=1)[:, np.newaxis]
    x_natural = rng.standard_normal(dim)
    b = A @ x_natural
    if not consistent:
        if rows == dim:
            raise ProblemError(_("A square full-rank system is always consistent."))
        b = b + noise * rng.standard_normal(rows)
    return KaczmarzSystem.from_rows(A, b, consistent=consistent, x_natural=x_natural)


def make_two_point_quadratic():
    """f_1(x) = 0.5(x-1)^2, f_2(x) = 0.5(x+1)^2, so f(x) = 0.5x^2 + 0.5."""
    components = (
        QuadraticComponent([[1.0]], [1.0], 0.5),
        QuadraticComponent([[1.0]], [-1.0], 0.5),
    )
    return FiniteSumProblem(
        dim=1,
        components=components,
        lipschitz_L=1.0,
        per_component_L0=1.0,
        strong_mu=1.0,
        restricted_mu=1.0,
        f_star=0.5,
        solution_projector=PointSolution([0.0]),
        name="two_point",
    )


def make_shared_minimizer_problem(components, dim, seed=0, spread=1.0):
    """f_i(x) = 0.5 c_i ||x - x_natural||^2: every component is minimised at x_natural."""
    rng = np.random.default_rng(seed)
    x_natural = rng.standard_normal(dim)
    weights = 1.0 + spread * rng.random(components)
    eye = np.eye(dim)
    parts = tuple(
        QuadraticComponent(c * eye, c * x_natural, 0.5 * c * float(x_natural @ x_natural))
        for c in weights
    )
    mean_weight = float(fixed_order_mean(weights))
    return FiniteSumProblem(
        dim=dim,
        components=parts,
        lipschitz_L=mean_weight,
        per_component_L0=float(np.max(weights)),
        strong_mu=mean_weight,
        restricted_mu=mean_weight,
        f_star=0.0,
        solution_projector=PointSolution(x_natural),
        name="shared_minimizer",
    )


def make_quadratic_l1_problem(components, dim, seed=0, spread=0.0, noise=1.0):
    """
    f_i(x) = 0.5 (x - z_i)^T H_i (x - z_i) with H_i = I + spread * v_i v_i^T (unit v_i)
    and z_i = x_natural + noise * w_i. Strongly convex; the l1 experiments pair it with
    a weighted l1 regulariser.
    """
    rng = np.random.default_rng(seed)
    x_natural = rng.standard_normal(dim)
    Z = x_natural + noise * rng.standard_normal((components, dim))
    V = rng.standard_normal((components, dim))
    V = V / np.linalg.norm(V, axis=1)[:, np.newaxis]
    eye = np.eye(dim)
    hessians = [eye + spread * np.outer(v, v) for v in V]
    parts = tuple(
        QuadraticComponent(H, H @ z, 0.5 * float(z @ H @ z)) for H, z in zip(hessians, Z)
    )
    H_bar = fixed_order_mean(np.array(hessians))
    c_bar = fixed_order_mean(np.array([H @ z for H, z in zip(hessians, Z)]))
    spectrum = np.linalg.eigvalsh(H_bar)
    x_min = np.linalg.solve(H_bar, c_bar)
    f_star = float(fixed_order_mean(np.array([part.value(x_min) for part in parts])))
    return FiniteSumProblem(
        dim=dim,
        components=parts,
        lipschitz_L=float(spectrum[-1]),
        per_component_L0=float(1.0 + spread),
        strong_mu=float(spectrum[0]),
        restricted_mu=float(spectrum[0]),
        f_star=f_star,
        solution_projector=PointSolution(x_min),
        name="quadratic",
    )


def check_invariants(problem, probes=None, tolerance=1e-12):
    """
    Probe-based validation of a problem's declared constants. Returns the list of
    failed invariants; an empty list means every check passed.
    """
    if probes is None:
        probes = probe_grid(problem.dim)
    failures = []

    for x in probes[:8]:
        values = np.array([component.value(x) for component in problem.components])
        if abs(problem.value(x) - fixed_order_mean(values)) > tolerance * (1 + abs(problem.value(x))):
            failures.append("mean_value")
            break

    for x in probes:
        grad = problem.gradient(x)
        mean_grad = fixed_order_mean(problem.component_gradients(x))
        if np.linalg.norm(mean_grad - grad) > tolerance * (1 + np.linalg.norm(grad)):
            failures.append("mean_gradient")
            break

    for x in probes[:8]:
        for component in problem.components:
            grad = component.gradient(x)
            fd = np.empty(problem.dim)
            for j in range(problem.dim):
                step = np.zeros(problem.dim)
                step[j] = FD_STEP
                fd[j] = (component.value(x + step) - component.value(x - step)) / (2 * FD_STEP)
            if np.linalg.norm(fd - grad) > 1e-5 * max(1.0, np.linalg.norm(grad)):
                failures.append("finite_difference_gradient")
                break
        if failures and failures[-1] == "finite_difference_gradient":
            break

    grads = np.array([problem.gradient(x) for x in probes])
    L = problem.lipschitz_L
    for i in range(len(probes)):
        diff_x = np.linalg.norm(probes[i + 1 :] - probes[i], axis=1)
        diff_g = np.linalg.norm(grads[i + 1 :] - grads[i], axis=1)
        if np.any(diff_g > L * diff_x * (1 + 1e-9) + tolerance):
            failures.append("lipschitz_gradient")
            break

    projected = problem.solution_projector(probes)
    if np.max(np.abs(problem.solution_projector(projected) - projected)) > tolerance * (
        1 + np.max(np.abs(projected))
    ):
        failures.append("projector_idempotent")

    if problem.restricted_mu > 0:
        gap = problem.value(probes) - problem.value(projected)
        growth = 0.5 * problem.restricted_mu * sq_norms(probes - projected)
        if np.any(gap < growth * (1 - 1e-9) - tolerance * (1 + np.abs(gap))):
            failures.append("restricted_strong_convexity")

    if failures:
        logger.warning("Problem %s failed invariants: %s", problem.name, ", ".join(failures))
    return failures
