import logging
import math

import numpy as np
from django.utils.translation import gettext_lazy as _

from apps.growth.models import GC, SGC, WGC, GrowthReport, NecessaryConditionReport
from apps.problems.services import exact_conditional_moment, probe_descriptor, probe_grid
from apps.solvers.services import infer_method, successors
from sgm_lab.exceptions import HypothesisError, NumericalError, ProblemError
from sgm_lab.util import fixed_order_mean, sq_norms

logger = logging.getLogger(__name__)

ZERO_GRADIENT = 1e-12
ENVELOPE_TOLERANCE = 1e-9


def _moments(problem, probes):
    """(||grad f(x)||^2, E||grad f_i(x)||^2, max_i ||grad f_i(x)||^2) for every probe."""
    rows = []
    for x in np.asarray(probes, dtype=np.float64):
        grads = problem.component_gradients(x)
        mean_grad, second_moment = exact_conditional_moment(problem, x)
        rows.append((float(mean_grad @ mean_grad), second_moment, float(np.max(sq_norms(grads)))))
    return np.array(rows).reshape(-1, 3)


def default_probes(problem, seed=0):
    """The seeded probe grid plus the solution-set projection of each of its points."""
    grid = probe_grid(problem.dim, seed=seed)
    return np.concatenate([grid, problem.solution_projector(grid)])


def fit_wgc(problem, probe_points, descriptor=None):
    """
    Lexicographically smallest (sigma^2, then M) with
    E||grad f_i(x)||^2 <= M ||grad f(x)||^2 + sigma^2 on every probe.
    """
    if len(probe_points) == 0:
        raise ProblemError(_("The probe set is empty."))
    moments = _moments(problem, probe_points)
    grad_sq, second = moments[:, 0], moments[:, 1]
    zero = np.sqrt(grad_sq) <= ZERO_GRADIENT

    sigma_sq = float(np.max(second[zero])) if np.any(zero) else 0.0
    degenerate = not np.any(~zero)
    if degenerate:
        logger.warning("every probe has a vanishing gradient; M set to 1 by convention")
        M = 1.0
    else:
        M = max(1.0, float(np.max((second[~zero] - sigma_sq) / grad_sq[~zero])))

    if np.any(second > M * grad_sq + sigma_sq + ENVELOPE_TOLERANCE * (1.0 + second)):
        raise NumericalError(_("The fitted growth envelope does not dominate a probe."))
    return GrowthReport(
        B_sgc=math.inf,
        M_wgc=M,
        sigma_sq=sigma_sq,
        classification=GC if sigma_sq <= 1e-12 else WGC,
        probes=descriptor or {},
        degenerate=degenerate,
    )


def fit_sgc(problem, probe_points):
    """
    Smallest B with max_i ||grad f_i(x)||^2 <= B ||grad f(x)||^2 on the probes; infinite
    when some probe has grad f(x) = 0 but a nonzero component gradient.
    """
    moments = _moments(problem, probe_points)
    grad_sq, worst = moments[:, 0], moments[:, 2]
    zero = np.sqrt(grad_sq) <= ZERO_GRADIENT
    if np.any(np.sqrt(worst[zero]) > ZERO_GRADIENT):
        return math.inf
    if not np.any(~zero):
        return 1.0
    return float(np.max(worst[~zero] / grad_sq[~zero]))


def growth_report(problem, probe_points=None, seed=0):
    """Probed WGC fit, upgraded to SGC when the probed B is finite."""
    if probe_points is None:
        probe_points = default_probes(problem, seed)
    report = fit_wgc(problem, probe_points, descriptor=probe_descriptor(seed))
    report.B_sgc = fit_sgc(problem, probe_points)
    if math.isfinite(report.B_sgc):
        report.classification = SGC
    logger.info(
        "growth of %s: B=%s M=%.6g sigma^2=%.6g (%s)",
        problem.name, report.B_sgc, report.M_wgc, report.sigma_sq, report.classification,
    )
    return report


def kaczmarz_M(system):
    """m ||A||^2 ||(A^T A)^{-1}||^2 from the eigenvalues of A^T A."""
    spectrum = system.gram_spectrum
    if spectrum[0] <= 1e-12 * spectrum[-1]:
        raise ProblemError(_("The system matrix is rank deficient."))
    return float(system.m * spectrum[-1] / spectrum[0] ** 2)


def kaczmarz_growth_report(system, seed=0):
    """
    Closed-form constants of a consistent system: sigma = 0, M = kaczmarz_M and
    B = m M (each row carries at most m times the mean).
    """
    if not system.consistent:
        raise HypothesisError(_("Closed-form growth constants need a consistent system."))
    M = kaczmarz_M(system)
    return GrowthReport(
        B_sgc=system.m * M,
        M_wgc=M,
        sigma_sq=0.0,
        classification=SGC,
        probes=probe_descriptor(seed),
        analytic=True,
    )


def example1_constants(problem, probe_points=None):
    """
    M = 4 L0 / mu and sigma^2 = 2 beta^2, with beta^2 the largest second moment at a
    solution point. The resulting growth bound is checked on the probes.
    """
    if not problem.mu > 0:
        raise HypothesisError(_("These constants need a (restricted) strong convexity modulus mu > 0."))
    if not problem.per_component_L0 > 0:
        raise HypothesisError(_("These constants need a positive per-component Lipschitz constant."))
    M = 4 * problem.per_component_L0 / problem.mu
    sigma_sq = 2 * problem.beta_sq
    if probe_points is None:
        probe_points = default_probes(problem)
    moments = _moments(problem, probe_points)
    if np.any(moments[:, 1] > M * moments[:, 0] + sigma_sq + ENVELOPE_TOLERANCE * (1.0 + moments[:, 1])):
        raise HypothesisError(_("The growth bound with M = 4 L0 / mu fails on a probe; check the declared constants."))
    return M, sigma_sq


def fit_pointwise_growth(problem, probe_points, convex_set=None):
    """Smallest M with ||grad f_i(x)||^2 <= M ||grad f(x)||^2 for every i and every probe in C."""
    points = np.asarray(probe_points, dtype=np.float64)
    if convex_set is not None:
        points = convex_set.project(points)
    return fit_sgc(problem, points)


def fit_shifted_growth(problem, probe_points, x_star):
    """
    Smallest M with E||grad f_i(x) - grad f(x*)||^2 <= M ||grad f(x) - grad f(x*)||^2, the
    sigma = 0 form the necessary condition takes when the subdifferential of g is a
    single constant vector.
    """
    shift = problem.gradient(np.asarray(x_star, dtype=np.float64))
    worst = 0.0
    found = False
    for x in np.asarray(probe_points, dtype=np.float64):
        spread = fixed_order_mean(sq_norms(problem.component_gradients(x) - shift))
        denominator = float(np.sum((problem.gradient(x) - shift) ** 2))
        if math.sqrt(denominator) <= ZERO_GRADIENT:
            if math.sqrt(spread) > ZERO_GRADIENT:
                return math.inf
            continue
        found = True
        worst = max(worst, float(spread) / denominator)
    return worst if found else 1.0


def _anchor(problem, trajectory, reference):
    if reference is not None:
        return np.asarray(reference, dtype=np.float64)
    return problem.solution_projector(trajectory.points[0])


def measure_contraction(problem, geometry, method, gamma, trajectory, sigma_sq, reference=None):
    """
    The smallest omega with E||x+ - x*||^2 <= omega ||x - x*||^2 + gamma^2 sigma^2 at every
    stored iterate, by enumerating all n successors.
    """
    x_star = _anchor(problem, trajectory, reference)
    omega = 0.0
    for x in trajectory.points:
        distance = float(np.sum((x - x_star) ** 2))
        if distance <= 1e-24:
            continue
        expected = float(fixed_order_mean(sq_norms(successors(problem, geometry, method, gamma, x) - x_star)))
        omega = max(omega, (expected - gamma**2 * sigma_sq) / distance)
    return omega


def verify_necessary_condition(
    problem, geometry, gamma, trajectory, omega, sigma_sq, method=None, reference=None, steps=None
):
    """Exact per-iterate check of the necessary condition and of its hypothesis."""
    if not 0 <= omega < 1:
        raise HypothesisError(_("omega=%(omega)g is outside [0, 1).") % {"omega": omega})
    method = method or infer_method(geometry)
    x_star = _anchor(problem, trajectory, reference)
    points = trajectory.points if steps is None else trajectory.points[: steps + 1]
    times = np.asarray(trajectory.point_times)[: len(points)]
    lhs, rhs, hyp_lhs, hyp_rhs = [], [], [], []
    for x in points:
        nexts = successors(problem, geometry, method, gamma, x)
        G = (x - nexts) / gamma
        mean_G = fixed_order_mean(G)
        lhs.append(float(fixed_order_mean(sq_norms(G))))
        rhs.append(float(mean_G @ mean_G) / (1 - omega) + sigma_sq)
        hyp_lhs.append(float(fixed_order_mean(sq_norms(nexts - x_star))))
        hyp_rhs.append(omega * float(np.sum((x - x_star) ** 2)) + gamma**2 * sigma_sq)
    report = NecessaryConditionReport(
        times=times,
        lhs=np.array(lhs),
        rhs=np.array(rhs),
        hypothesis_lhs=np.array(hyp_lhs),
        hypothesis_rhs=np.array(hyp_rhs),
        omega=omega,
        sigma_sq=sigma_sq,
    )
    if len(report.hypothesis_failures):
        logger.warning("contraction hypothesis fails at %d iterates", len(report.hypothesis_failures))
    if not report.holds:
        logger.warning("necessary condition violated at %d iterates", len(report.violations))
    return report
