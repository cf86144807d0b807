from pathlib import Path

from django.test import SimpleTestCase

from apps.experiments.config import parse_config_text
from apps.experiments.models import FLOOR_CHECK, WGC_CHECK, ExperimentConfig
from apps.experiments.services import build_geometry, build_problem, resolve_step, validate_config
from apps.geometry.models import ConvexSet, LinearMonotoneOperator, Regularizer
from apps.problems.services import make_two_point_quadratic
from apps.solvers.models import StepPolicy
from sgm_lab.exceptions import ConfigError, ProblemError

BASE = """\
[experiment]
name = demo
method = sgm
iterations = 100
replications = 10
seed = 1
checks = wgc, floor

[problem]
kind = two_point

[step]
policy = constant
gamma = 0.5
"""


def load(text):
    return validate_config(parse_config_text(text))


def with_geometry(method, body):
    return BASE.replace("method = sgm", f"method = {method}") + "\n[geometry]\n" + body


class ParseTests(SimpleTestCase):
    def test_valid_config(self):
        config = load(BASE)
        self.assertEqual(config.name, "demo")
        self.assertEqual(config.iterations, 100)
        self.assertEqual(config.checks, (WGC_CHECK, FLOOR_CHECK))
        self.assertEqual(config.check_options["floor_factor"], 4.0)
        self.assertEqual(config.check_options["necessary_steps"], 500)
        self.assertIsNone(config.geometry)

    def test_inline_comments_are_ignored(self):
        config = load(BASE.replace("seed = 1", "seed = 1  # master seed"))
        self.assertEqual(config.seed, 1)

    def test_zero_replications_is_rejected_with_line(self):
        with self.assertRaises(ConfigError) as caught:
            load(BASE.replace("replications = 10", "replications = 0"))
        error = caught.exception
        self.assertEqual(error.section, "experiment")
        self.assertEqual(error.key, "replications")
        self.assertEqual(error.line, 5)
        self.assertEqual(error.exit_code, 2)
        self.assertIn("line 5", str(error))

    def test_unknown_key_is_rejected(self):
        with self.assertRaises(ConfigError) as caught:
            load(BASE.replace("gamma = 0.5", "gamma = 0.5\ngama = 0.4"))
        self.assertEqual(caught.exception.key, "gama")
        self.assertEqual(caught.exception.line, 15)

    def test_unknown_section_is_rejected(self):
        with self.assertRaises(ConfigError) as caught:
            load(BASE + "\n[plots]\nstyle = dark\n")
        self.assertEqual(caught.exception.section, "plots")

    def test_missing_required_section(self):
        with self.assertRaises(ConfigError) as caught:
            load(BASE.split("[step]")[0])
        self.assertEqual(caught.exception.section, "step")

    def test_duplicate_key_reports_line(self):
        with self.assertRaises(ConfigError) as caught:
            load(BASE.replace("seed = 1", "seed = 1\nseed = 2"))
        self.assertEqual(caught.exception.key, "seed")
        self.assertEqual(caught.exception.line, 7)

    def test_line_without_separator(self):
        with self.assertRaises(ConfigError) as caught:
            load(BASE.replace("seed = 1", "seed = 1\njust some words"))
        self.assertEqual(caught.exception.line, 7)

    def test_duplicate_check_and_unknown_check(self):
        with self.assertRaises(ConfigError):
            load(BASE.replace("checks = wgc, floor", "checks = wgc, wgc"))
        with self.assertRaises(ConfigError) as caught:
            load(BASE.replace("checks = wgc, floor", "checks = wgc, speed"))
        self.assertEqual(caught.exception.key, "checks")

    def test_seed_range(self):
        load(BASE.replace("seed = 1", f"seed = {2**64 - 1}"))
        with self.assertRaises(ConfigError):
            load(BASE.replace("seed = 1", f"seed = {2**64}"))

    def test_audit_replication_must_exist(self):
        with self.assertRaises(ConfigError) as caught:
            load(BASE.replace("seed = 1", "seed = 1\naudit_replication = 10"))
        self.assertEqual(caught.exception.key, "audit_replication")

    def test_problem_keys_depend_on_kind(self):
        with self.assertRaises(ConfigError) as caught:
            load(BASE.replace("kind = two_point", "kind = two_point\nrows = 3"))
        self.assertEqual(caught.exception.key, "rows")
        with self.assertRaises(ConfigError) as caught:
            load(BASE.replace("kind = two_point", "kind = kaczmarz\nrows = 20"))
        self.assertEqual(caught.exception.key, "dim")

    def test_noise_only_for_inconsistent_systems(self):
        text = BASE.replace("kind = two_point", "kind = kaczmarz\nrows = 20\ndim = 5\nnoise = 0.1")
        with self.assertRaises(ConfigError):
            load(text)
        config = load(text.replace("noise = 0.1", "consistent = false\nnoise = 0.1"))
        self.assertFalse(config.problem["consistent"])

    def test_step_policies(self):
        with self.assertRaises(ConfigError):
            load(BASE.replace("gamma = 0.5", "gamma = 0"))
        with self.assertRaises(ConfigError):
            load(BASE.replace("policy = constant", "policy = recommend"))
        config = load(BASE.replace("policy = constant\ngamma = 0.5", "policy = inverse_t\nc = 2"))
        self.assertEqual(config.step["c"], 2.0)

    def test_geometry_must_suit_method(self):
        with self.assertRaises(ConfigError) as caught:
            load(with_geometry("sgm", "kind = box\nlo = -1\nhi = 1\n"))
        self.assertEqual(caught.exception.key, "kind")
        with self.assertRaises(ConfigError):
            load(with_geometry("prox_sgm", "kind = ball\ncenter = 0\nradius = 1\n"))
        load(with_geometry("psgm", "kind = box\nlo = -1\nhi = 1\n"))

    def test_geometry_required_parameters(self):
        with self.assertRaises(ConfigError) as caught:
            load(with_geometry("prox_sgm", "kind = l1\n"))
        self.assertEqual(caught.exception.key, "weight")
        with self.assertRaises(ConfigError) as caught:
            load(with_geometry("prox_sgm", "kind = indicator\nset_kind = ball\nradius = 1\n"))
        self.assertEqual(caught.exception.key, "center")

    def test_matrix_field(self):
        config = load(with_geometry("resolvent_sgm", "kind = symmetric\nmatrix = 2, 0; 0, 1\n"))
        self.assertEqual(config.geometry["matrix"], [[2.0, 0.0], [0.0, 1.0]])
        with self.assertRaises(ConfigError):
            load(with_geometry("resolvent_sgm", "kind = symmetric\nmatrix = 2, 0; 1\n"))


class BuildTests(SimpleTestCase):
    def config(self, **changes):
        fields = dict(
            name="t",
            method="sgm",
            iterations=10,
            replications=1,
            seed=0,
            problem={"kind": "two_point"},
            step={"policy": "constant", "gamma": 0.5},
        )
        fields.update(changes)
        return ExperimentConfig(**fields)

    def test_problem_kinds(self):
        problem, system = build_problem(self.config())
        self.assertEqual(problem.name, "two_point")
        self.assertIsNone(system)
        problem, system = build_problem(
            self.config(problem={"kind": "kaczmarz", "rows": 20, "dim": 5, "seed": 0, "consistent": True})
        )
        self.assertEqual((problem.n, problem.dim), (20, 5))
        self.assertTrue(system.consistent)
        with self.assertRaises(ProblemError):
            build_problem(self.config(problem={"kind": "kaczmarz", "rows": 3, "dim": 5, "seed": 0, "consistent": True}))

    def test_matrix_file_is_relative_to_config(self):
        directory = Path(__file__).resolve().parent
        config = self.config(
            problem={"kind": "custom_matrix_file", "path": "data/identity.txt"},
            source=directory / "experiment.ini",
        )
        problem, system = build_problem(config)
        self.assertEqual((system.m, system.d), (2, 2))
        self.assertEqual(problem.name, "kaczmarz")

    def test_geometry_kinds(self):
        self.assertTrue(build_geometry(self.config(), 2).is_whole_space)
        box = build_geometry(self.config(method="psgm", geometry={"kind": "box", "lo": [0, 0], "hi": [1, 1], "seed": 0}), 2)
        self.assertIsInstance(box, ConvexSet)
        l1 = build_geometry(self.config(method="prox_sgm", geometry={"kind": "l1", "weight": 0.1, "seed": 0}), 2)
        self.assertIsInstance(l1, Regularizer)
        indicator = build_geometry(
            self.config(
                method="prox_sgm",
                geometry={"kind": "indicator", "set_kind": "hyperplane", "normal": [1, 0], "offset": [1], "seed": 0},
            ),
            2,
        )
        self.assertEqual(indicator.convex_set.kind, ConvexSet.HYPERPLANE)
        operator = build_geometry(self.config(method="resolvent_sgm", geometry={"kind": "scaled_identity", "scale": 2.0, "seed": 0}), 3)
        self.assertIsInstance(operator, LinearMonotoneOperator)
        self.assertEqual(operator.dim, 3)

    def test_geometry_dimension_mismatch(self):
        with self.assertRaises(ProblemError):
            build_geometry(self.config(method="psgm", geometry={"kind": "box", "lo": [0], "hi": [1], "seed": 0}), 2)

    def test_resolve_step(self):
        problem = make_two_point_quadratic()
        policy, rho = resolve_step(self.config(step={"policy": "recommend"}), problem, 1.0)
        self.assertEqual(policy, StepPolicy.constant(0.5))
        self.assertAlmostEqual(rho, 0.25)
        policy, rho = resolve_step(self.config(step={"policy": "constant", "gamma": 1.5}), problem, 1.0)
        self.assertIsNone(rho)
        policy, rho = resolve_step(self.config(step={"policy": "inverse_t"}), problem, 1.0)
        self.assertEqual(policy, StepPolicy.inverse_t(2.0))
        self.assertIsNone(rho)
