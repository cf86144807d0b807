import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apps.geometry.models import ConvexSet
from apps.problems.loaders import parse_kaczmarz_text
from apps.problems.models import CallableComponent, FiniteSumProblem, KaczmarzSystem, PointSolution
from apps.problems.serializers import ProblemSummarySerializer
from apps.problems.services import (
    check_invariants,
    exact_conditional_moment,
    make_kaczmarz_problem,
    make_quadratic_l1_problem,
    make_shared_minimizer_problem,
    make_two_point_quadratic,
    probe_grid,
    random_kaczmarz_system,
)
from apps.solvers.models import SGM, SolverRun, StepPolicy
from apps.solvers.services import run
from sgm_lab.exceptions import ProblemError

coordinates = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)


class KaczmarzProblemTests(SimpleTestCase):
    def setUp(self):
        self.problem = make_kaczmarz_problem(KaczmarzSystem(A=np.eye(2), b=np.zeros(2), consistent=True))

    def test_identity_system_constants(self):
        self.assertEqual(self.problem.n, 2)
        self.assertAlmostEqual(self.problem.lipschitz_L, 0.5)
        self.assertAlmostEqual(self.problem.mu, 0.5)
        self.assertEqual(self.problem.f_star, 0.0)

    def test_value_gradient_and_moment(self):
        x = np.array([2.0, 0.0])
        self.assertAlmostEqual(self.problem.value(x), 1.0)
        np.testing.assert_allclose(self.problem.gradient(x), x / 2)
        mean_grad, second_moment = exact_conditional_moment(self.problem, x)
        np.testing.assert_allclose(mean_grad, x / 2)
        self.assertAlmostEqual(second_moment, 2.0)

    def test_gradient_is_residual_times_row(self):
        system = random_kaczmarz_system(12, 4, seed=3)
        problem = make_kaczmarz_problem(system)
        x = np.linspace(-1.0, 1.0, 4)
        expected = system.A.T @ (system.A @ x - system.b) / system.m
        np.testing.assert_allclose(problem.gradient(x), expected, atol=1e-14)

    def test_batch_gradient_matches_single_rows(self):
        problem = make_kaczmarz_problem(random_kaczmarz_system(6, 3, seed=1))
        X = np.arange(12.0).reshape(4, 3)
        indices = np.array([5, 0, 2, 2])
        batch = problem.batch_gradient(indices, X)
        for r in range(4):
            single = problem.batch_gradient(indices[r : r + 1], X[r : r + 1])[0]
            self.assertTrue(np.array_equal(batch[r], single))

    def test_random_system_is_consistent(self):
        system = random_kaczmarz_system(20, 5, seed=7)
        self.assertTrue(system.consistent)
        np.testing.assert_allclose(system.least_squares_solution, system.x_natural, atol=1e-10)

    def test_inconsistent_system_has_positive_optimum(self):
        problem = make_kaczmarz_problem(random_kaczmarz_system(20, 5, seed=7, consistent=False))
        self.assertGreater(problem.f_star, 0.0)
        x_star = problem.solution_projector(np.zeros(5))
        np.testing.assert_allclose(problem.gradient(x_star), np.zeros(5), atol=1e-12)

    def test_rank_deficient_system_rejected(self):
        A = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        with self.assertRaises(ProblemError):
            KaczmarzSystem.from_rows(A, np.ones(3))

    def test_underdetermined_system_rejected(self):
        with self.assertRaises(ProblemError):
            KaczmarzSystem.from_rows(np.array([[1.0, 0.0, 0.0]]), np.ones(1))

    def test_square_inconsistent_request_rejected(self):
        with self.assertRaises(ProblemError):
            random_kaczmarz_system(3, 3, consistent=False)

    def test_invariants_hold(self):
        self.assertEqual(check_invariants(make_kaczmarz_problem(random_kaczmarz_system(10, 3))), [])


class TwoPointProblemTests(SimpleTestCase):
    def setUp(self):
        self.problem = make_two_point_quadratic()

    def test_moments(self):
        self.assertAlmostEqual(exact_conditional_moment(self.problem, [0.0])[1], 1.0)
        self.assertAlmostEqual(exact_conditional_moment(self.problem, [3.0])[1], 10.0)

    def test_optimum(self):
        self.assertAlmostEqual(self.problem.value([0.0]), 0.5)
        self.assertAlmostEqual(self.problem.beta_sq, 1.0)

    def test_invariants_hold(self):
        self.assertEqual(check_invariants(self.problem), [])


class QuadraticProblemTests(SimpleTestCase):
    def test_shared_minimizer_has_zero_component_gradients(self):
        problem = make_shared_minimizer_problem(5, 3, seed=2)
        x_star = problem.solution_projector(np.zeros(3))
        self.assertAlmostEqual(exact_conditional_moment(problem, x_star)[1], 0.0)
        self.assertEqual(check_invariants(problem), [])

    def test_quadratic_problem_minimizer(self):
        problem = make_quadratic_l1_problem(8, 3, seed=4, spread=0.5)
        x_star = problem.solution_projector(np.zeros(3))
        np.testing.assert_allclose(problem.gradient(x_star), np.zeros(3), atol=1e-12)
        self.assertAlmostEqual(problem.value(x_star), problem.f_star)
        self.assertEqual(check_invariants(problem), [])

    def test_summary_serializer(self):
        data = ProblemSummarySerializer(make_two_point_quadratic()).data
        self.assertEqual(data["name"], "two_point")
        self.assertEqual(data["n"], 2)
        self.assertEqual(data["solution"], [0.0])


class LoaderTests(SimpleTestCase):
    def test_parses_header_and_rows(self):
        system = parse_kaczmarz_text("# small system\n3 2\n1 0 1\n0 2 4\n\n1 1 3\n")
        self.assertEqual((system.m, system.d), (3, 2))
        np.testing.assert_allclose(system.A[1], [0.0, 1.0])
        self.assertAlmostEqual(system.b[1], 2.0)
        self.assertTrue(system.consistent)

    def test_wrong_row_width_reports_line(self):
        with self.assertRaisesMessage(ProblemError, "Line 3"):
            parse_kaczmarz_text("2 2\n1 0 1\n0 1\n")

    def test_missing_rows(self):
        with self.assertRaises(ProblemError):
            parse_kaczmarz_text("3 2\n1 0 1\n0 1 1\n")

    def test_non_numeric_entry(self):
        with self.assertRaises(ProblemError):
            parse_kaczmarz_text("2 2\n1 x 1\n0 1 1\n")


class MomentIdentityTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.system = random_kaczmarz_system(12, 3, seed=3)
        cls.problems = (
            make_kaczmarz_problem(cls.system),
            make_quadratic_l1_problem(8, 3, seed=4, spread=0.5),
            make_shared_minimizer_problem(5, 3, seed=2),
        )

    def assertMomentIdentities(self, problem, x):
        grad = problem.gradient(x)
        mean_grad, second_moment = exact_conditional_moment(problem, x)
        self.assertLessEqual(np.linalg.norm(mean_grad - grad), 1e-12 * (1 + np.linalg.norm(grad)))
        self.assertGreaterEqual(second_moment - grad @ grad, -1e-12 * (1 + second_moment))

    def test_identities_on_probe_grid(self):
        for problem in self.problems:
            with self.subTest(problem=problem.name):
                for x in probe_grid(3):
                    self.assertMomentIdentities(problem, x)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, 3, elements=coordinates))
    def test_identities_anywhere(self, x):
        for problem in self.problems:
            self.assertMomentIdentities(problem, x)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, 3, elements=coordinates))
    def test_kaczmarz_moment_is_mean_squared_residual(self, x):
        residual = self.system.A @ x - self.system.b
        _mean_grad, second_moment = exact_conditional_moment(self.problems[0], x)
        self.assertLessEqual(abs(second_moment - residual @ residual / self.system.m), 1e-12 * (1 + second_moment))


class CallableProblemTests(SimpleTestCase):
    def setUp(self):
        self.problem = FiniteSumProblem(
            dim=1,
            components=(
                CallableComponent(lambda x: 0.5 * (x[0] - 1.0) ** 2, lambda x: x - 1.0),
                CallableComponent(lambda x: 0.5 * (x[0] + 1.0) ** 2, lambda x: x + 1.0),
            ),
            lipschitz_L=1.0,
            per_component_L0=1.0,
            strong_mu=1.0,
            restricted_mu=1.0,
            f_star=0.5,
            solution_projector=PointSolution([0.0]),
        )

    def test_invariants_and_moment(self):
        self.assertEqual(check_invariants(self.problem), [])
        mean_grad, second_moment = exact_conditional_moment(self.problem, [3.0])
        np.testing.assert_allclose(mean_grad, [3.0])
        self.assertAlmostEqual(second_moment, 10.0)

    def test_sgm_matches_the_quadratic_form(self):
        def solver_run(problem):
            return SolverRun(
                method=SGM,
                problem=problem,
                geometry=ConvexSet.whole_space(),
                step=StepPolicy.constant(0.5),
                iters=40,
                seed=3,
                x0=[2.0],
            )

        looped = run(solver_run(self.problem))
        stacked = run(solver_run(make_two_point_quadratic()))
        np.testing.assert_array_equal(looped.dist_sq, stacked.dist_sq)
        np.testing.assert_array_equal(looped.sampled_indices, stacked.sampled_indices)
