import logging
import math

import numpy as np
from django.utils.translation import gettext_lazy as _
from scipy import stats as scipy_stats

from apps.analysis.models import EnsembleStats, FloorEstimate, InverseTRateCheck, RateFit
from apps.solvers.services import contraction_factor
from sgm_lab.exceptions import FitError, HypothesisError
from sgm_lab.util import fixed_order_mean

logger = logging.getLogger(__name__)

EPSILON = 1e-300
MIN_WINDOW = 10
MIN_HORIZON = 50
MIN_INVERSE_T_HORIZON = 1000
FLOORLESS_DROP = 0.1
INVERSE_T_BAND = (-1.3, -0.7)


def aggregate(runs, gamma=None, predicted_rho=None, predicted_floor=None, step_kind="constant"):
    """
    Mean and standard error over replications, summed in replication order so the
    result does not depend on the order ``runs`` arrive in.
    """
    if not runs:
        raise ValueError("nothing to aggregate")
    runs = sorted(runs, key=lambda trajectory: trajectory.replication)
    horizons = {trajectory.T for trajectory in runs}
    if len(horizons) != 1:
        raise ValueError(f"trajectories have different horizons: {sorted(horizons)}")
    data = np.stack([trajectory.dist_sq for trajectory in runs])
    R = len(runs)
    mean = fixed_order_mean(data)
    if R == 1:
        stderr = np.zeros_like(mean)
    else:
        variance = fixed_order_mean((data - mean) ** 2) * R / (R - 1)
        stderr = np.sqrt(variance / R)
    return EnsembleStats(
        T=runs[0].T,
        R=R,
        mean_dist_sq=mean,
        stderr=stderr,
        gamma=gamma,
        predicted_rho=predicted_rho,
        predicted_floor=predicted_floor,
        step_kind=step_kind,
    )


def _slope(times, values):
    """Slope of log(values) against times over the points above the underflow guard."""
    mask = values > EPSILON
    if np.count_nonzero(mask) < 2:
        return 0.0
    return scipy_stats.linregress(times[mask], np.log(values[mask])).slope


def estimate_floor(stats):
    """
    Tail mean over the final 10% of iterations, unless the tail is still decaying at no
    less than half the bulk slope while the bulk has clearly dropped: then floor 0.
    """
    T = stats.T
    a = np.asarray(stats.mean_dist_sq)
    times = np.arange(T + 1, dtype=np.float64)
    tail_start = int(math.floor(0.9 * T))
    bulk = slice(int(math.ceil(0.1 * T)), tail_start + 1)
    tail = slice(tail_start, T + 1)

    bulk_slope = _slope(times[bulk], a[bulk])
    tail_slope = _slope(times[tail], a[tail])
    bulk_drop = -bulk_slope * (times[bulk][-1] - times[bulk][0])
    if bulk_drop >= FLOORLESS_DROP and tail_slope <= 0.5 * bulk_slope:
        return FloorEstimate(floor=0.0, stderr=0.0, floorless=True, tail_start=tail_start)
    return FloorEstimate(
        floor=float(np.mean(a[tail])),
        stderr=float(np.mean(np.asarray(stats.stderr)[tail])),
        floorless=False,
        tail_start=tail_start,
    )


def _window_from_floor(a, floor):
    """
    The contiguous run of t, starting at the first t with a_t >= 10 floor, that stays
    above the underflow guard. An exact-zero plateau ends the window where it begins.
    """
    above = (a >= 10 * floor) & (a > EPSILON)
    if not np.any(above):
        return None
    start = int(np.argmax(above))
    stop = start
    while stop + 1 < len(a) and above[stop + 1]:
        stop += 1
    return start, stop


def fit_linear_rate(stats):
    """Least-squares fit of log(mean_dist_sq - floor) against t."""
    T = stats.T
    if T < MIN_HORIZON:
        raise FitError(_("A rate fit needs T >= %(min)d, got %(T)d.") % {"min": MIN_HORIZON, "T": T})
    a = np.asarray(stats.mean_dist_sq)
    floor = estimate_floor(stats)

    if floor.floorless:
        start, stop = int(math.ceil(0.1 * T)), int(math.floor(0.9 * T))
        times = np.arange(start, stop + 1)
        values = a[start : stop + 1]
        keep = values > EPSILON
        times, values = times[keep], values[keep]
    else:
        window = _window_from_floor(a, floor.floor)
        if window is None:
            raise FitError(_("No iterate lies a decade above the estimated floor."))
        start, stop = window
        times = np.arange(start, stop + 1)
        values = np.maximum(a[start : stop + 1] - floor.floor, EPSILON)

    if len(times) < MIN_WINDOW:
        raise FitError(
            _("The fit window holds %(count)d points; at least %(min)d are needed.")
            % {"count": len(times), "min": MIN_WINDOW}
        )
    fit = scipy_stats.linregress(times.astype(np.float64), np.log(values))
    rate = math.exp(fit.slope)
    rate_stderr = rate * fit.stderr
    if rate > 1.0:
        logger.warning("fitted rate %.6f exceeds 1; clamped", rate)
        rate = 1.0
    return RateFit(
        rate_per_iter=rate,
        floor_estimate=floor.floor,
        fit_window=(int(times[0]), int(times[-1])),
        r_squared=float(fit.rvalue**2),
        rate_stderr=float(rate_stderr),
        floor_stderr=floor.stderr,
        floorless=floor.floorless,
    )


def predict_floor(gamma, rho, sigma1_sq):
    """gamma^2 sigma1^2 / rho, the fixed point of r = (1 - rho) r + gamma^2 sigma1^2."""
    if not 0 < rho < 1:
        raise HypothesisError(_("rho=%(rho)g is outside (0, 1).") % {"rho": rho})
    return gamma**2 * sigma1_sq / rho


def sigma1_sq_projected(sigma_sq, L, M, min_C_f, f_star):
    """sigma^2 + 2LM (min_C f - f*)."""
    return sigma_sq + 2 * L * M * max(min_C_f - f_star, 0.0)


def sigma1_sq_proximal(M, grad_f_at_solution, sigma_sq):
    """2(1 + 2M)||grad f(x*)||^2 + 2 sigma^2."""
    grad = np.asarray(grad_f_at_solution, dtype=np.float64)
    return 2 * (1 + 2 * M) * float(grad @ grad) + 2 * sigma_sq


def halved_step_floor_ratio(gamma, L, M, mu, method):
    """floor(gamma / 2) / floor(gamma) with rho recomputed at both steps."""
    rho_full = contraction_factor(gamma, L, M, mu, method)
    rho_half = contraction_factor(gamma / 2, L, M, mu, method)
    if rho_full is None or rho_half is None:
        raise HypothesisError(_("gamma=%(gamma)g violates the step hypothesis.") % {"gamma": gamma})
    return (gamma / 2) ** 2 * rho_full / (gamma**2 * rho_half)


def check_inverse_t_rate(stats, band=INVERSE_T_BAND):
    """Slope of log mean_dist_sq against log t over [0.1T, T]; passes inside ``band``."""
    T = stats.T
    if T < MIN_INVERSE_T_HORIZON:
        return InverseTRateCheck(
            passed=False, slope=None, reason=f"T={T} is below {MIN_INVERSE_T_HORIZON}"
        )
    start = max(1, int(math.ceil(0.1 * T)))
    times = np.arange(start, T + 1, dtype=np.float64)
    values = np.asarray(stats.mean_dist_sq)[start:]
    keep = values > EPSILON
    if np.count_nonzero(keep) < MIN_WINDOW:
        return InverseTRateCheck(passed=False, slope=None, reason="the curve vanished")
    fit = scipy_stats.linregress(np.log(times[keep]), np.log(values[keep]))
    passed = band[0] <= fit.slope <= band[1]
    if not passed:
        logger.warning("log-log slope %.3f outside [%.1f, %.1f]", fit.slope, *band)
    return InverseTRateCheck(
        passed=bool(passed),
        slope=float(fit.slope),
        r_squared=float(fit.rvalue**2),
        window=(start, T),
    )
