import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from django.utils.translation import gettext_lazy as _
from rest_framework.settings import api_settings

from apps.analysis.models import AnalysisSummary
from apps.analysis.services import (
    aggregate,
    check_inverse_t_rate,
    estimate_floor,
    fit_linear_rate,
    halved_step_floor_ratio,
    predict_floor,
    sigma1_sq_projected,
    sigma1_sq_proximal,
)
from apps.experiments.config import read_config_file
from apps.experiments.models import (
    FAIL,
    FLOOR_CHECK,
    INVERSE_T_CHECK,
    NECESSARY_CHECK,
    PASS,
    RATE_CHECK,
    SGC_CHECK,
    SKIPPED,
    WGC_CHECK,
    CheckResult,
    ExperimentConfig,
    ExperimentOutcome,
)
from apps.experiments.reports import write_run_artifacts
from apps.experiments.serializers import GEOMETRY_KINDS_FOR_METHOD, SECTION_SERIALIZERS, SET_KINDS
from apps.geometry.models import ConvexSet, LinearMonotoneOperator, Regularizer
from apps.growth.services import (
    growth_report,
    kaczmarz_growth_report,
    measure_contraction,
    verify_necessary_condition,
)
from apps.problems.loaders import load_kaczmarz_system
from apps.problems.services import (
    make_kaczmarz_problem,
    make_quadratic_l1_problem,
    make_shared_minimizer_problem,
    make_two_point_quadratic,
    random_kaczmarz_system,
)
from apps.solvers.models import PSGM, SGM, SolverRun, StepPolicy, default_geometry
from apps.solvers.services import (
    audit_contraction,
    contraction_factor,
    recommend_step,
    reference_solution,
    run,
    run_ensemble,
    successors,
)
from sgm_lab.exceptions import ConfigError, FitError, HypothesisError, OutputError, ProblemError
from sgm_lab.util import fixed_order_mean, sq_norms

logger = logging.getLogger(__name__)

ZERO_FLOOR = 1e-12
M_TOLERANCE = 1e-9


def _first_error(detail, key=None):
    if isinstance(detail, dict):
        name, value = next(iter(detail.items()))
        if name == api_settings.NON_FIELD_ERRORS_KEY or not isinstance(name, str):
            name = None
        return _first_error(value, key or name)
    if isinstance(detail, (list, tuple)):
        return _first_error(detail[0], key)
    return key, str(detail)


def validate_config(parsed):
    """Run every section through its serializer and cross-check method and geometry."""
    validated = {}
    for name, serializer_class in SECTION_SERIALIZERS.items():
        if name == "geometry" and not parsed.has_section(name):
            continue
        serializer = serializer_class(data=parsed.section(name))
        if not serializer.is_valid():
            key, message = _first_error(serializer.errors)
            raise ConfigError(message, section=name, key=key, line=parsed.line_of(name, key))
        validated[name] = dict(serializer.validated_data)

    experiment = validated["experiment"]
    method = experiment["method"]
    geometry = validated.get("geometry")
    if geometry is not None and geometry["kind"] not in GEOMETRY_KINDS_FOR_METHOD[method]:
        raise ConfigError(
            _("Geometry kind '%(kind)s' cannot be used with method %(method)s.")
            % {"kind": geometry["kind"], "method": method},
            section="geometry",
            key="kind",
            line=parsed.line_of("geometry", "kind"),
        )

    config = ExperimentConfig(
        name=experiment["name"],
        method=method,
        iterations=experiment["iterations"],
        replications=experiment["replications"],
        seed=experiment["seed"],
        problem=validated["problem"],
        step=validated["step"],
        geometry=geometry,
        checks=tuple(experiment["checks"]),
        check_options=validated["checks"],
        threads=experiment.get("threads"),
        audit_replication=experiment["audit_replication"],
        source=parsed.source,
    )
    if "output" in experiment:
        config.output = config.resolve_path(experiment["output"])
    return config


def load_experiment_config(path, seed=None, threads=None, out=None):
    """Read, validate and apply the command-line overrides."""
    config = validate_config(read_config_file(path))
    changes = {}
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError(_("--seed must be a 64-bit unsigned integer."), key="seed")
        changes["seed"] = seed
    if threads is not None:
        if threads < 1:
            raise ConfigError(_("--threads must be at least 1."), key="threads")
        changes["threads"] = threads
    if out is not None:
        changes["output"] = Path(out)
    return replace(config, **changes) if changes else config


def build_problem(config):
    """The problem, plus the linear system behind it for Kaczmarz kinds."""
    params = config.problem
    kind = params["kind"]
    if kind == "kaczmarz":
        system = random_kaczmarz_system(
            params["rows"],
            params["dim"],
            seed=params["seed"],
            consistent=params["consistent"],
            noise=params.get("noise", 0.1),
        )
        return make_kaczmarz_problem(system), system
    if kind == "custom_matrix_file":
        system = load_kaczmarz_system(config.resolve_path(params["path"]))
        return make_kaczmarz_problem(system), system
    if kind == "two_point":
        return make_two_point_quadratic(), None
    if kind == "quadratic_l1":
        problem = make_quadratic_l1_problem(
            params["components"],
            params["dim"],
            seed=params["seed"],
            spread=params.get("spread", 0.0),
            noise=params.get("noise", 1.0),
        )
        return problem, None
    problem = make_shared_minimizer_problem(
        params["components"], params["dim"], seed=params["seed"], spread=params.get("spread", 1.0)
    )
    return problem, None


def _check_lengths(params, dim):
    for key in ("lo", "hi", "center", "normal", "linear"):
        if key in params and len(params[key]) != dim:
            raise ProblemError(
                _("[geometry] %(key)s has %(got)d entries; the problem has dimension %(dim)d.")
                % {"key": key, "got": len(params[key]), "dim": dim}
            )
    if "matrix" in params and len(params["matrix"][0]) != dim:
        raise ProblemError(_("[geometry] matrix must have one column per problem dimension."))


def _convex_set(kind, params):
    if kind == ConvexSet.WHOLE_SPACE:
        return ConvexSet.whole_space()
    if kind in (ConvexSet.HYPERPLANE, ConvexSet.HALFSPACE):
        if len(params["offset"]) != 1:
            raise ProblemError(_("[geometry] offset of a hyperplane or halfspace is a single number."))
        factory = ConvexSet.hyperplane if kind == ConvexSet.HYPERPLANE else ConvexSet.halfspace
        return factory(params["normal"], params["offset"][0])
    if kind == ConvexSet.BOX:
        return ConvexSet.box(params["lo"], params["hi"])
    if kind == ConvexSet.BALL:
        return ConvexSet.ball(params["center"], params["radius"])
    return ConvexSet.affine(params["matrix"], params["offset"])


def build_geometry(config, dim):
    params = config.geometry
    if params is None:
        return default_geometry(config.method, dim)
    _check_lengths(params, dim)
    kind = params["kind"]
    if kind in SET_KINDS:
        return _convex_set(kind, params)
    if kind == Regularizer.ZERO:
        return Regularizer.zero()
    if kind == Regularizer.CONSTANT:
        return Regularizer.constant_function(params["value"])
    if kind == Regularizer.L1:
        return Regularizer.l1(params["weight"])
    if kind == Regularizer.INDICATOR:
        return Regularizer.indicator(_convex_set(params["set_kind"], params))
    if kind == Regularizer.QUADRATIC:
        return Regularizer.quadratic(params["matrix"], params.get("linear"), params.get("value", 0.0))
    if kind == "zero_operator":
        return LinearMonotoneOperator.zero(dim)
    if kind == "scaled_identity":
        return LinearMonotoneOperator.scaled_identity(dim, params["scale"])
    if kind == "skew":
        return LinearMonotoneOperator.skew(dim, params["scale"], seed=params["seed"])
    return LinearMonotoneOperator.from_symmetric(params["matrix"])


def resolve_step(config, problem, M):
    """(StepPolicy, predicted rho or None)."""
    params = config.step
    L, mu = problem.lipschitz_L, problem.mu
    if params["policy"] == "recommend":
        gamma, rho = recommend_step(L, M, mu, config.method)
        logger.info("recommended step gamma=%.6g (rho=%.6g)", gamma, rho)
        return StepPolicy.constant(gamma), rho
    if params["policy"] == "constant":
        gamma = params["gamma"]
        rho = contraction_factor(gamma, L, M, mu, config.method) if L > 0 and M > 0 and mu > 0 else None
        if rho is None:
            logger.warning("gamma=%.6g is outside the linear-rate hypotheses; no rho predicted", gamma)
        return StepPolicy.constant(gamma), rho
    c = params.get("c")
    if c is None:
        if not mu > 0:
            raise HypothesisError(_("The default inverse_t constant 2/mu needs mu > 0."))
        c = 2.0 / mu
    return StepPolicy.inverse_t(c), None


def prepare_output_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(_("Cannot create %(path)s: %(error)s") % {"path": path, "error": exc})
    if not os.access(path, os.W_OK):
        raise OutputError(_("%(path)s is not writable.") % {"path": path})
    return path


@dataclass
class RunContext:
    config: ExperimentConfig
    problem: object
    system: object
    geometry: object
    policy: StepPolicy
    rho: Optional[float]
    growth: object
    analytic: object
    x_star: np.ndarray
    reference: Optional[np.ndarray]
    sigma1_sq: float
    floor_pred: Optional[float]
    stats: object = None
    audit: object = None

    @property
    def M(self):
        return (self.analytic or self.growth).M_wgc

    @property
    def options(self):
        return self.config.check_options


def _sigma1_sq(method, problem, growth, x_star, M):
    if method in (SGM, PSGM):
        return sigma1_sq_projected(
            growth.sigma_sq, problem.lipschitz_L, M, float(problem.value(x_star)), problem.f_star
        )
    return sigma1_sq_proximal(M, problem.gradient(x_star), growth.sigma_sq)


def prepare(config):
    """Build everything the run needs: problem, geometry, growth constants, step and predictions."""
    logger.info("building %s problem for %s", config.problem["kind"], config.name)
    problem, system = build_problem(config)
    geometry = build_geometry(config, problem.dim)

    growth = growth_report(problem, seed=config.problem.get("seed", 0))
    analytic = kaczmarz_growth_report(system, seed=config.problem.get("seed", 0)) if system is not None and system.consistent else None
    M = (analytic or growth).M_wgc

    policy, rho = resolve_step(config, problem, M)
    reference = reference_solution(problem, geometry, config.method)
    x_star = reference if reference is not None else problem.solution_projector(np.zeros(problem.dim))
    sigma1_sq = _sigma1_sq(config.method, problem, analytic or growth, x_star, M)
    floor_pred = predict_floor(policy.gamma, rho, sigma1_sq) if rho is not None else None
    return RunContext(
        config=config,
        problem=problem,
        system=system,
        geometry=geometry,
        policy=policy,
        rho=rho,
        growth=growth,
        analytic=analytic,
        x_star=np.asarray(x_star, dtype=np.float64),
        reference=reference,
        sigma1_sq=sigma1_sq,
        floor_pred=floor_pred,
    )


def simulate(context, threads=None):
    """The replicated ensemble (endpoints only) and the fully recorded audit replication."""
    config = context.config
    solver_run = SolverRun(
        method=config.method,
        problem=context.problem,
        geometry=context.geometry,
        step=context.policy,
        iters=config.iterations,
        seed=config.seed,
        record_points=False,
        reference=context.reference,
    )
    runs = run_ensemble(solver_run, config.replications, threads=threads or config.threads)
    context.stats = aggregate(
        runs,
        gamma=context.policy.initial,
        predicted_rho=context.rho,
        predicted_floor=context.floor_pred,
        step_kind=context.policy.kind,
    )
    context.audit = run(solver_run.with_replication(config.audit_replication, record_points=True))
    return context


def _skip(name, reason):
    logger.info("check %s skipped: %s", name, reason)
    return CheckResult(name=name, status=SKIPPED, detail=reason)


def _result(name, passed, detail="", **values):
    status = PASS if passed else FAIL
    if not passed:
        logger.warning("check %s failed: %s", name, detail)
    return CheckResult(name=name, status=status, detail=detail, values=values)


def check_wgc(context):
    probed = context.growth
    passed = probed.M_wgc >= 1 - 1e-12
    values = {"M": probed.M_wgc, "sigma_sq": probed.sigma_sq}
    detail = ""
    if context.analytic is not None:
        values["kaczmarz_M"] = context.analytic.M_wgc
        if probed.M_wgc > context.analytic.M_wgc + M_TOLERANCE:
            passed = False
            detail = str(_("The probed M exceeds the closed-form Kaczmarz constant."))
    return _result(WGC_CHECK, passed, detail, **values)


def check_sgc(context):
    report = context.analytic or context.growth
    finite = report.sgc_holds
    passed = finite and report.sigma_sq <= ZERO_FLOOR
    detail = "" if passed else str(_("Some component gradient survives where the full gradient vanishes."))
    return _result(SGC_CHECK, passed, detail, B="inf" if not finite else report.B_sgc, sigma_sq=report.sigma_sq)


def check_necessary(context):
    if not context.policy.is_constant:
        return _skip(NECESSARY_CHECK, "needs a constant step")
    config, gamma = context.config, context.policy.gamma
    nexts = successors(context.problem, context.geometry, config.method, gamma, context.x_star)
    G = (context.x_star - nexts) / gamma
    sigma_sq = float(fixed_order_mean(sq_norms(G)))
    head = context.audit.head(context.options["necessary_steps"])
    omega = measure_contraction(
        context.problem, context.geometry, config.method, gamma, head, sigma_sq, reference=context.x_star
    )
    omega += context.options["omega_slack"]
    context.growth.omega = omega
    if context.analytic is not None:
        context.analytic.omega = omega
    if omega >= 1:
        return _result(
            NECESSARY_CHECK,
            False,
            str(_("The measured contraction factor %(omega).6g is not below 1.") % {"omega": omega}),
            omega=omega,
            sigma_sq=sigma_sq,
        )
    report = verify_necessary_condition(
        context.problem,
        context.geometry,
        gamma,
        head,
        omega,
        sigma_sq,
        method=config.method,
        reference=context.x_star,
    )
    detail = "" if report.holds else f"violated at {len(report.violations)} iterates"
    return _result(
        NECESSARY_CHECK,
        report.holds,
        detail,
        omega=omega,
        sigma_sq=sigma_sq,
        iterates=int(len(report.times)),
        violations=int(len(report.violations)),
        hypothesis_failures=int(len(report.hypothesis_failures)),
    )


def check_rate(context, fit):
    if not context.policy.is_constant:
        return _skip(RATE_CHECK, "needs a constant step")
    values = {"rate_fit": fit.rate_per_iter, "rate_stderr": fit.rate_stderr, "fit_window": list(fit.fit_window)}
    if context.rho is None:
        return _result(RATE_CHECK, fit.rate_per_iter < 1, "" if fit.rate_per_iter < 1 else "no decay", **values)
    bound = 1 - context.rho + 3 * fit.rate_stderr + context.options["rate_slack"]
    audit = audit_contraction(
        context.problem,
        context.geometry,
        context.config.method,
        context.policy.gamma,
        context.audit,
        context.rho,
        sigma1_sq=context.sigma1_sq,
        reference=context.x_star,
    )
    failures = []
    if fit.rate_per_iter > bound:
        failures.append(f"fitted rate {fit.rate_per_iter:.6g} exceeds {bound:.6g}")
    if not audit.holds:
        failures.append(f"contraction audit fails at {len(audit.violations)} iterates")
    return _result(
        RATE_CHECK,
        not failures,
        "; ".join(failures),
        bound=bound,
        audited_iterates=int(len(audit.times)),
        **values,
    )


def check_floor(context, estimate):
    if not context.policy.is_constant:
        return _skip(FLOOR_CHECK, "needs a constant step")
    values = {"floor_fit": estimate.floor, "floor_stderr": estimate.stderr, "floor_pred": context.floor_pred}
    if context.sigma1_sq <= ZERO_FLOOR:
        passed = estimate.floor <= ZERO_FLOOR
        return _result(FLOOR_CHECK, passed, "" if passed else "noise-free run left a floor", **values)
    if context.floor_pred is None:
        return _skip(FLOOR_CHECK, "no floor prediction: the step is outside the contraction hypotheses")
    factor = context.options["floor_factor"]
    try:
        values["halved_step_ratio_pred"] = halved_step_floor_ratio(
            context.policy.gamma,
            context.problem.lipschitz_L,
            context.M,
            context.problem.mu,
            context.config.method,
        )
    except HypothesisError:
        values["halved_step_ratio_pred"] = None
    failures = []
    if estimate.floor > context.floor_pred + 3 * estimate.stderr:
        failures.append("empirical floor exceeds the prediction")
    if estimate.floor < context.floor_pred / factor:
        failures.append(f"empirical floor is more than a factor {factor:g} below the prediction")
    return _result(FLOOR_CHECK, not failures, "; ".join(failures), **values)


def check_inverse_t(context):
    if context.policy.kind != StepPolicy.INVERSE_T:
        return _skip(INVERSE_T_CHECK, "needs the inverse_t step policy")
    result = check_inverse_t_rate(context.stats)
    detail = result.reason or ("" if result.passed else f"log-log slope {result.slope:.3f} out of band")
    return _result(INVERSE_T_CHECK, result.passed, detail, slope=result.slope, r_squared=result.r_squared)


def evaluate(context):
    """Run the requested checks in the order given and build the analysis summary."""
    requested = context.config.checks
    fit = None
    estimate = estimate_floor(context.stats) if context.policy.is_constant else None
    if context.policy.is_constant:
        try:
            fit = fit_linear_rate(context.stats)
        except FitError:
            if RATE_CHECK in requested:
                raise
            logger.warning("rate fit refused; the summary carries no rate")

    checks = []
    for name in requested:
        if name == WGC_CHECK:
            checks.append(check_wgc(context))
        elif name == SGC_CHECK:
            checks.append(check_sgc(context))
        elif name == NECESSARY_CHECK:
            checks.append(check_necessary(context))
        elif name == RATE_CHECK:
            checks.append(check_rate(context, fit) if fit is not None else _skip(name, "needs a constant step"))
        elif name == FLOOR_CHECK:
            checks.append(check_floor(context, estimate) if estimate is not None else _skip(name, "needs a constant step"))
        else:
            checks.append(check_inverse_t(context))

    inverse_t_slope = next(
        (check.values.get("slope") for check in checks if check.name == INVERSE_T_CHECK), None
    )
    summary = AnalysisSummary(
        method=context.config.method,
        gamma=context.policy.initial,
        rho_pred=context.rho,
        rate_fit=fit.rate_per_iter if fit else None,
        rate_stderr=fit.rate_stderr if fit else None,
        r_squared=fit.r_squared if fit else None,
        fit_window=list(fit.fit_window) if fit else None,
        floor_pred=context.floor_pred,
        floor_fit=estimate.floor if estimate else None,
        floor_stderr=estimate.stderr if estimate else None,
        inverse_t_slope=inverse_t_slope,
        passes={check.name: check.passed for check in checks if check.status != SKIPPED},
    )
    return checks, summary


def run_experiment(config, threads=None):
    """Build, run, check and write every artifact; the outcome carries the exit status."""
    output_dir = prepare_output_dir(config.output_dir)
    context = prepare(config)
    logger.info(
        "running %s: %s, T=%d, R=%d, seed=%d",
        config.name, config.method, config.iterations, config.replications, config.seed,
    )
    simulate(context, threads=threads)
    logger.info("analysing %s", config.name)
    checks, summary = evaluate(context)
    outcome = ExperimentOutcome(
        config=config,
        checks=checks,
        summary=summary,
        growth=context.analytic or context.growth,
        stats=context.stats,
        problem=context.problem,
        audit=context.audit,
        output_dir=output_dir,
    )
    logger.info("writing artifacts to %s", output_dir)
    write_run_artifacts(outcome)
    return outcome
