import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from django.conf import settings
from django.utils.translation import gettext_lazy as _

from apps.geometry.models import ConvexSet, LinearMonotoneOperator, Regularizer
from apps.solvers.models import (
    PROX_SGM,
    PSGM,
    RESOLVENT_SGM,
    SGM,
    ContractionAudit,
    Trajectory,
    check_method_geometry,
)
from apps.solvers.streams import CHUNK_SIZE, IndexStream
from sgm_lab.exceptions import DivergenceError, HypothesisError, NumericalError
from sgm_lab.util import as_rows, fixed_order_mean, sq_norms

logger = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e12
COMPOSITE_TOLERANCE = 1e-12
COMPOSITE_MAX_STEPS = 10**6


def backward_step(method, geometry, gamma, V):
    if method in (SGM, PSGM):
        return geometry.project(V)
    if method == PROX_SGM:
        return geometry.prox(gamma, V)
    return geometry.resolvent(gamma, V)


def advance(method, problem, geometry, gamma, X, indices):
    """One iteration for every row of X, row r using component ``indices[r]``."""
    V = X - gamma * problem.batch_gradient(indices, X)
    return backward_step(method, geometry, gamma, V)


def successors(problem, geometry, method, gamma, x):
    """x_+ for every component index, as an (n, d) array."""
    x = np.asarray(x, dtype=np.float64)
    X = np.broadcast_to(x, (problem.n, problem.dim))
    return advance(method, problem, geometry, gamma, X, np.arange(problem.n))


def infer_method(geometry):
    if isinstance(geometry, Regularizer):
        return PROX_SGM
    if isinstance(geometry, LinearMonotoneOperator):
        return RESOLVENT_SGM
    if isinstance(geometry, ConvexSet):
        return SGM if geometry.is_whole_space else PSGM
    raise TypeError(f"not a geometry object: {geometry!r}")


def gradient_mapping(problem, geometry, gamma, x, i, method=None):
    """
    G = (x - x_+) / gamma and q = G - grad f_i(x). For prox_sgm q lies in the
    subdifferential of g at x_+; for resolvent_sgm it equals M_op x_+.
    """
    method = method or infer_method(geometry)
    x = np.asarray(x, dtype=np.float64)
    indices = np.array([i])
    X = x[np.newaxis, :]
    grad = problem.batch_gradient(indices, X)[0]
    x_next = backward_step(method, geometry, gamma, X - gamma * grad[np.newaxis, :])[0]
    G = (x - x_next) / gamma
    return G, G - grad


def _run_block(spec, replications):
    problem, geometry, method = spec.problem, spec.geometry, spec.method
    T, R = spec.iters, len(replications)
    streams = [IndexStream(spec.seed, r, problem.n) for r in replications]
    gammas = spec.step.values(T)
    stride = spec.thinning_stride

    X = np.tile(spec.initial_point(), (R, 1))
    dist_sq = np.empty((R, T + 1))
    dist_sq[:, 0] = sq_norms(X - spec.distance_target(X))
    sampled = np.empty((R, T), dtype=np.int64) if spec.record_points else None
    points, times = [X.copy()], [0]

    for start in range(0, T, CHUNK_SIZE):
        count = min(CHUNK_SIZE, T - start)
        chunk = np.stack([stream.draw(count) for stream in streams])
        if sampled is not None:
            sampled[:, start : start + count] = chunk
        for k in range(count):
            t = start + k + 1
            X = advance(method, problem, geometry, gammas[t - 1], X, chunk[:, k])
            norms = sq_norms(X)
            bad = ~(np.isfinite(norms) & (norms <= DIVERGENCE_NORM**2))
            if np.any(bad):
                replication = replications[int(np.argmax(bad))]
                logger.error("%s diverged at t=%d (replication %d)", method, t, replication)
                raise DivergenceError(
                    _("Iterate is not finite or exceeds norm %(limit).0e at t=%(t)d.")
                    % {"limit": DIVERGENCE_NORM, "t": t},
                    t=t,
                    replication=replication,
                )
            dist_sq[:, t] = sq_norms(X - spec.distance_target(X))
            if spec.record_points and (t % stride == 0 or t == T):
                points.append(X.copy())
                times.append(t)

    if not spec.record_points:
        points.append(X.copy())
        times.append(T)
    stacked = np.stack(points, axis=1)
    point_times = np.array(times)
    return [
        Trajectory(
            points=stacked[row],
            point_times=point_times,
            dist_sq=dist_sq[row],
            sampled_indices=None if sampled is None else sampled[row],
            step_values=gammas,
            replication=replication,
            seed=spec.seed,
            method=method,
        )
        for row, replication in enumerate(replications)
    ]


def run(spec):
    logger.debug("run %s T=%d seed=%d replication=%d", spec.method, spec.iters, spec.seed, spec.replication)
    trajectory = _run_block(spec, [spec.replication])[0]
    logger.debug("run finished, final dist_sq %.3e", trajectory.dist_sq[-1])
    return trajectory


def run_ensemble(spec, replications, threads=None, block=None):
    """
    Replications 0..R-1 of ``spec``, advanced in fixed blocks of ``block`` rows on a
    thread pool. Block boundaries do not depend on ``threads``, and every row is
    computed with fixed-order arithmetic, so replication r equals run(spec) with
    replication=r bitwise.
    """
    threads = threads or settings.SGM_THREADS
    block = block or settings.SGM_REPLICATION_BLOCK
    blocks = [list(range(start, min(start + block, replications))) for start in range(0, replications, block)]
    logger.info(
        "running %d replications of %s (T=%d) in %d blocks on %d threads",
        replications, spec.method, spec.iters, len(blocks), threads,
    )
    with ThreadPoolExecutor(max_workers=threads) as executor:
        results = list(executor.map(lambda rows: _run_block(spec, rows), blocks))
    return [trajectory for chunk in results for trajectory in chunk]


def recommend_step(L, M, mu, method):
    """
    (gamma, rho) maximising the predicted contraction. Projected path: gamma = 1/(2LM),
    rho = mu/(4LM), which needs mu < 4LM. Proximal and resolvent paths: gamma = 1/(4LM),
    rho = mu/(8LM).
    """
    if not (L > 0 and M > 0 and mu > 0):
        raise HypothesisError(_("L, M and mu must all be positive to recommend a step."))
    if method in (SGM, PSGM):
        if mu >= 4 * L * M:
            raise HypothesisError(
                _(
                    "The linear-rate result for the projected method needs mu < 4LM, but "
                    "mu=%(mu)g and 4LM=%(bound)g (its remark allows mu <= 4LM; the strict form is enforced)."
                )
                % {"mu": mu, "bound": 4 * L * M}
            )
        gamma = 1.0 / (2 * L * M)
        rho = gamma * mu * (1 - gamma * L * M)
    else:
        gamma = 1.0 / (4 * L * M)
        rho = gamma * mu * (1 - 2 * gamma * L * M)
    if not 0 < rho < 1:
        raise HypothesisError(_("Predicted contraction rho=%(rho)g is outside (0, 1).") % {"rho": rho})
    return gamma, rho


def contraction_factor(gamma, L, M, mu, method):
    """
    Predicted rho for a given constant step, or None when the step violates the
    result's hypotheses (prox and resolvent paths require gamma < 1/(2LM)).
    """
    if method in (SGM, PSGM):
        if mu >= 4 * L * M:
            return None
        rho = gamma * mu * (1 - gamma * L * M)
    else:
        if gamma >= 1.0 / (2 * L * M):
            return None
        rho = gamma * mu * (1 - 2 * gamma * L * M)
    return rho if 0 < rho < 1 else None


def solve_composite(problem, geometry, method, x0=None, tolerance=COMPOSITE_TOLERANCE, max_steps=COMPOSITE_MAX_STEPS):
    """
    Deterministic full-gradient counterpart of ``method`` with step 1/L, iterated until
    successive points agree to ``tolerance`` relative. Used as x* whenever the geometry
    moves the solution away from the problem's own solution set.
    """
    check_method_geometry(method, geometry)
    if not problem.lipschitz_L > 0:
        raise NumericalError(_("A composite solve needs a positive Lipschitz constant."))
    gamma = 1.0 / problem.lipschitz_L
    x = np.zeros(problem.dim) if x0 is None else np.asarray(x0, dtype=np.float64)
    x = backward_step(method, geometry, gamma, x[np.newaxis, :])[0]
    for step in range(1, max_steps + 1):
        x_next = backward_step(method, geometry, gamma, (x - gamma * problem.gradient(x))[np.newaxis, :])[0]
        if not np.all(np.isfinite(x_next)):
            raise NumericalError(_("The composite solve produced a non-finite point."))
        if np.linalg.norm(x_next - x) <= tolerance * (1.0 + np.linalg.norm(x_next)):
            logger.debug("composite solve converged after %d steps", step)
            return x_next
        x = x_next
    raise NumericalError(
        _("The composite solve did not reach tolerance %(tol).0e in %(steps)d steps.")
        % {"tol": tolerance, "steps": max_steps}
    )


def geometry_is_trivial(geometry):
    if isinstance(geometry, ConvexSet):
        return geometry.is_whole_space
    if isinstance(geometry, Regularizer):
        return geometry.is_constant
    return geometry.is_zero


def reference_solution(problem, geometry, method):
    """
    x* for distance tracking: None when the geometry leaves the problem's solution set
    unchanged (distances then use the problem's projector), else the composite solve.
    """
    if geometry_is_trivial(geometry):
        return None
    return solve_composite(problem, geometry, method)


def audit_contraction(problem, geometry, method, gamma, trajectory, rho, sigma1_sq=0.0, reference=None):
    """
    Enumerate all n successors of every stored iterate and compare
    E_i||x_+ - xbar_+||^2 with (1 - rho)||x - xbar||^2 + gamma^2 sigma1^2.
    """
    target = (lambda X: np.broadcast_to(reference, np.shape(X))) if reference is not None else problem.solution_projector
    lhs, rhs = [], []
    for x in trajectory.points:
        nexts = successors(problem, geometry, method, gamma, x)
        lhs.append(float(fixed_order_mean(sq_norms(nexts - target(nexts)))))
        row, _single = as_rows(x)
        current = float(sq_norms(row - target(row))[0])
        rhs.append((1 - rho) * current + gamma**2 * sigma1_sq)
    audit = ContractionAudit(times=np.asarray(trajectory.point_times), lhs=np.array(lhs), rhs=np.array(rhs))
    if not audit.holds:
        logger.warning("contraction audit failed at %d iterates", len(audit.violations))
    return audit
