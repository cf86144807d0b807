"""
End-to-end experiments. The long ones are skipped when SGM_SKIP_SLOW=1.
"""
import json
import math
import os
import tempfile
from io import StringIO
from pathlib import Path
from unittest import skipIf

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.test import SimpleTestCase

from apps.analysis.services import halved_step_floor_ratio
from apps.experiments.services import load_experiment_config, prepare, simulate
from apps.growth.services import fit_sgc, fit_wgc, measure_contraction, verify_necessary_condition
from apps.problems.services import make_shared_minimizer_problem, make_two_point_quadratic, probe_grid
from apps.solvers.models import SGM
from apps.solvers.services import successors
from sgm_lab.util import fixed_order_mean, sq_norms

CONFIGS = Path(settings.BASE_DIR) / "configs"
SKIP_SLOW = os.environ.get("SGM_SKIP_SLOW") == "1"


class ExperimentTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def run_config(self, name):
        out = self.root / name
        call_command("run", str(CONFIGS / f"{name}.ini"), "--out", str(out), stdout=StringIO(), stderr=StringIO())
        manifest = json.loads((out / "manifest.json").read_text())
        summary = json.loads((out / "summary.json").read_text())
        return manifest, summary

    def assertChecksPass(self, manifest):
        failed = [check for check in manifest["checks"] if check["status"] != "pass"]
        self.assertEqual(failed, [], failed)


class NecessaryConditionAcceptance(ExperimentTestCase):
    def exact_check(self, name):
        context = simulate(prepare(load_experiment_config(CONFIGS / f"{name}.ini", out=self.root / name)))
        gamma = context.policy.gamma
        nexts = successors(context.problem, context.geometry, context.config.method, gamma, context.x_star)
        sigma_sq = float(fixed_order_mean(sq_norms((context.x_star - nexts) / gamma)))
        omega = measure_contraction(
            context.problem, context.geometry, context.config.method, gamma, context.audit, sigma_sq, context.x_star
        )
        report = verify_necessary_condition(
            context.problem,
            context.geometry,
            gamma,
            context.audit,
            omega,
            sigma_sq,
            method=context.config.method,
            reference=context.x_star,
        )
        self.assertEqual(len(report.times), 501)
        self.assertEqual(len(report.violations), 0)
        self.assertTrue(np.all(report.margins >= -1e-9 * (1.0 + np.abs(report.rhs))))
        return omega, sigma_sq

    def test_consistent_kaczmarz(self):
        omega, sigma_sq = self.exact_check("kaczmarz_necessary")
        self.assertLess(sigma_sq, 1e-20)
        self.assertLess(omega, 1.0)

    def test_two_point(self):
        omega, sigma_sq = self.exact_check("two_point_necessary")
        self.assertAlmostEqual(sigma_sq, 1.0)
        self.assertAlmostEqual(omega, 0.25, delta=1e-8)

    def test_commands_pass(self):
        for name in ("kaczmarz_necessary", "two_point_necessary"):
            with self.subTest(config=name):
                manifest, _summary = self.run_config(name)
                self.assertChecksPass(manifest)


class GrowthClassificationAcceptance(SimpleTestCase):
    def test_two_point_and_shared_minimizer(self):
        two_point = make_two_point_quadratic()
        probes = np.concatenate([probe_grid(1), [[0.0]]])
        self.assertTrue(math.isinf(fit_sgc(two_point, probes)))
        report = fit_wgc(two_point, probes)
        self.assertAlmostEqual(report.M_wgc, 1.0, delta=1e-9)
        self.assertAlmostEqual(report.sigma_sq, 1.0, delta=1e-9)

        shared = make_shared_minimizer_problem(6, 3, seed=2)
        shared_probes = np.concatenate([probe_grid(3), shared.solution_projector(probe_grid(3))])
        self.assertTrue(math.isfinite(fit_sgc(shared, shared_probes)))


@skipIf(SKIP_SLOW, "slow experiment")
class LinearConvergenceAcceptance(ExperimentTestCase):
    def test_projected_kaczmarz_at_recommended_step(self):
        manifest, summary = self.run_config("kaczmarz_linear")
        self.assertChecksPass(manifest)
        bound = 1 - summary["rho_pred"] + 3 * summary["rate_stderr"] + 0.01
        self.assertLessEqual(summary["rate_fit"], bound)
        self.assertLessEqual(summary["floor_fit"], 1e-12)

    def test_randomized_kaczmarz_unit_step(self):
        manifest, summary = self.run_config("kaczmarz_unit_step")
        self.assertChecksPass(manifest)
        self.assertIsNone(summary["rho_pred"])
        self.assertLess(summary["rate_fit"], 1.0)
        self.assertLessEqual(summary["floor_fit"], 1e-12)


@skipIf(SKIP_SLOW, "slow experiment")
class NoiseFloorAcceptance(ExperimentTestCase):
    def test_l1_floor_within_prediction(self):
        manifest, summary = self.run_config("l1_floor")
        self.assertChecksPass(manifest)
        self.assertLessEqual(summary["floor_fit"], summary["floor_pred"] + 3 * summary["floor_stderr"])

    def test_floor_proportional_to_step(self):
        manifest, full = self.run_config("two_point_floor")
        self.assertChecksPass(manifest)
        manifest, half = self.run_config("two_point_floor_half")
        self.assertChecksPass(manifest)

        # Stationary level of x+ = (1 - gamma) x +- gamma is gamma / (2 - gamma).
        self.assertAlmostEqual(full["floor_fit"], 1.0 / 3.0, delta=3 * full["floor_stderr"] + 1e-3)
        self.assertAlmostEqual(half["floor_fit"], 1.0 / 7.0, delta=3 * half["floor_stderr"] + 1e-3)

        empirical = full["floor_fit"] / half["floor_fit"]
        predicted = 1.0 / halved_step_floor_ratio(0.5, 1.0, 1.0, 1.0, SGM)
        self.assertLessEqual(abs(empirical - predicted) / predicted, 0.25)

    def test_first_step_is_exact(self):
        context = simulate(prepare(load_experiment_config(CONFIGS / "two_point_floor.ini", out=self.root / "x")))
        self.assertEqual(context.stats.mean_dist_sq[1], 0.25)
        self.assertEqual(context.stats.stderr[1], 0.0)


@skipIf(SKIP_SLOW, "slow experiment")
class InverseStepAcceptance(ExperimentTestCase):
    def test_log_log_slope(self):
        manifest, summary = self.run_config("l1_inverse_t")
        self.assertChecksPass(manifest)
        self.assertGreaterEqual(summary["inverse_t_slope"], -1.3)
        self.assertLessEqual(summary["inverse_t_slope"], -0.7)


@skipIf(SKIP_SLOW, "slow experiment")
class ShippedExperimentAcceptance(ExperimentTestCase):
    def test_box_constrained_projection(self):
        manifest, summary = self.run_config("box_constrained")
        self.assertChecksPass(manifest)
        self.assertLessEqual(summary["floor_fit"], 1e-12)
        self.assertLess(summary["rate_fit"], 1 - summary["rho_pred"])

    def test_inconsistent_kaczmarz_noise_floor(self):
        manifest, summary = self.run_config("kaczmarz_noisy")
        self.assertChecksPass(manifest)
        self.assertGreater(summary["floor_fit"], 0.0)
        self.assertLessEqual(summary["floor_fit"], summary["floor_pred"] + 3 * summary["floor_stderr"])

    def test_resolvent_with_monotone_operator(self):
        manifest, summary = self.run_config("resolvent_identity")
        self.assertChecksPass(manifest)
        self.assertLess(summary["rate_fit"], 1.0)
        self.assertLessEqual(summary["floor_fit"], summary["floor_pred"] + 3 * summary["floor_stderr"])
