import os
import sys
import unittest

import numpy as np
from scipy.integrate import quad

# Add repo root and src to path
ROOT = os.path.join(os.path.dirname(__file__), '..')
sys.path.append(ROOT)
sys.path.append(os.path.join(ROOT, 'src'))

from drsir_moment import (InfeasibleMomentsError, MomentAmbiguitySet, MomentFunctionSpec, g_hat,
                          moment_grid_primal, pragmatic_moment_drsir, separate_moment,
                          solve_first_stage_moment)
from numerics import PiecewisePolynomial
from sir_core import CostVector, FirstStageProblem, value_hat_1d


class TestSmoothedMomentFunctions(unittest.TestCase):

    def test_mean_is_unchanged(self):
        spec = MomentFunctionSpec.mean(0.0)
        for s in (-2.3, 0.0, 1.7):
            self.assertAlmostEqual(g_hat(spec, s), s)

    def test_mean_absolute_deviation(self):
        spec = MomentFunctionSpec.mad(1.0, 0.5)
        self.assertAlmostEqual(g_hat(spec, 1.0), 0.25)
        self.assertAlmostEqual(g_hat(spec, 3.0), 2.0)
        self.assertAlmostEqual(g_hat(spec, 1.3), 0.25 + 0.09)
        print("✓ Smoothed MAD test passed")

    def test_polynomials_against_quadrature(self):
        specs = [MomentFunctionSpec.power(2, 1.0), MomentFunctionSpec.power(3, 0.0),
                 MomentFunctionSpec.poly([1.0, -2.0, 0.5], 0.0)]
        for spec in specs:
            for s in (-1.2, 0.4, 2.5):
                expected = quad(lambda t: float(spec.g(t)), s - 0.5, s + 0.5)[0]
                self.assertAlmostEqual(float(g_hat(spec, s)), expected, places=10)
        self.assertAlmostEqual(float(g_hat(MomentFunctionSpec.power(2, 1.0), 0.0)), 1.0 / 12.0)
        print("✓ Smoothed polynomial test passed")

    def test_piecewise_function(self):
        box = PiecewisePolynomial.constant(1.0, 0.0, 2.0)
        spec = MomentFunctionSpec.piecewise(box, 0.5)
        self.assertAlmostEqual(float(g_hat(spec, 1.0)), 1.0)
        self.assertAlmostEqual(float(g_hat(spec, 0.0)), 0.5)

    def test_validation(self):
        with self.assertRaises(ValueError):
            MomentFunctionSpec('median', 0.0)
        with self.assertRaises(ValueError):
            MomentFunctionSpec.poly([1.0, 2.0, 3.0, 4.0, 5.0], 0.0)
        with self.assertRaises(ValueError):
            MomentAmbiguitySet([[MomentFunctionSpec.mean(0.0)]], [(1.0, -1.0)])
        with self.assertRaises(ValueError):
            MomentAmbiguitySet([[MomentFunctionSpec.mean(0.0)]], [(-np.inf, 1.0)])


class TestMomentDRSIR(unittest.TestCase):

    def setUp(self):
        """Mean zero and mean absolute deviation one half on [-3, 3]"""
        self.q = CostVector.single(2.0, 0.0)
        self.specs = [MomentFunctionSpec.mean(0.0), MomentFunctionSpec.mad(0.0, 0.5)]
        self.U = MomentAmbiguitySet([self.specs], [(-3.0, 3.0)])

    def test_dual_matches_grid_primal(self):
        result = pragmatic_moment_drsir(self.q, self.U, [0.0])
        self.assertGreaterEqual(result.duality_gap, -1e-6)
        self.assertLessEqual(result.duality_gap, 1e-3)
        # Jensen: the worst case is at least v_hat at the mean
        self.assertGreaterEqual(result.value, float(value_hat_1d(2.0, 0.0, 0.0)) - 1e-9)
        value, duals = result
        self.assertEqual(len(duals), 1)
        self.assertLessEqual(duals[0].max_violation, 1e-6)
        print("✓ Moment dual against primal test passed")

    def test_dual_matches_grid_primal_random_instances(self):
        """Mean and MAD around a random center, support at least one unit away on each side"""
        rng = np.random.default_rng(19)
        for _ in range(20):
            center = float(rng.uniform(-1.0, 1.0))
            support = (center - float(rng.uniform(1.0, 3.0)), center + float(rng.uniform(1.0, 3.0)))
            specs = [MomentFunctionSpec.mean(center), MomentFunctionSpec.mad(center, float(rng.uniform(0.3, 0.9)))]
            q = CostVector.single(float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.0, 2.0)))
            x = [float(rng.uniform(-1.0, 1.0))]
            result = pragmatic_moment_drsir(q, MomentAmbiguitySet([specs], [support]), x)
            self.assertGreaterEqual(result.duality_gap, -1e-6)
            self.assertLessEqual(result.duality_gap, 1e-3)
        print("✓ Random moment dual against primal test passed")

    def test_dual_solution_is_feasible(self):
        """The multipliers dominate v_hat on the whole support"""
        result = pragmatic_moment_drsir(self.q, self.U, [0.4])
        dual = result.duals[0]
        s = np.linspace(-3.0, 3.0, 601)
        lhs = sum(nu * g_hat(spec, s) for spec, nu in zip(self.specs, dual.nu)) + dual.pi
        self.assertTrue(np.all(lhs >= value_hat_1d(2.0, 0.0, s - 0.4) - 1e-6))
        violation, _ = separate_moment(2.0, 0.0, self.specs, (-3.0, 3.0), 0.4, dual.nu, dual.pi)
        self.assertLessEqual(violation, 1e-6)

    def test_value_increases_with_spread(self):
        tight = MomentAmbiguitySet([[MomentFunctionSpec.mean(0.0), MomentFunctionSpec.mad(0.0, 0.3)]],
                                   [(-3.0, 3.0)])
        wide = MomentAmbiguitySet([[MomentFunctionSpec.mean(0.0), MomentFunctionSpec.mad(0.0, 1.0)]],
                                  [(-3.0, 3.0)])
        self.assertLess(pragmatic_moment_drsir(self.q, tight, [0.0]).value,
                        pragmatic_moment_drsir(self.q, wide, [0.0]).value)

    def test_degenerate_support(self):
        a = 1.2
        U = MomentAmbiguitySet([[MomentFunctionSpec.mean(a)]], [(a, a)])
        q = CostVector.single(2.0, 1.0)
        result = pragmatic_moment_drsir(q, U, [0.5])
        self.assertAlmostEqual(result.value, float(value_hat_1d(2.0, 1.0, a - 0.5)), places=7)
        print("✓ Degenerate support test passed")

    def test_infeasible_targets(self):
        U = MomentAmbiguitySet([[MomentFunctionSpec.mean(5.0)]], [(-1.0, 1.0)])
        with self.assertRaises(InfeasibleMomentsError):
            pragmatic_moment_drsir(self.q, U, [0.0])

    def test_grid_primal_weights(self):
        primal = moment_grid_primal(2.0, 0.0, self.specs, (-3.0, 3.0), 0.0, step=0.01)
        self.assertAlmostEqual(float(primal.weights.sum()), 1.0)
        mean = float(np.dot(primal.weights, primal.points))
        self.assertAlmostEqual(mean, 0.0, places=7)
        self.assertGreater(primal.active_points.size, 0)


class TestMomentFirstStage(unittest.TestCase):

    def test_degenerate_support_optimum(self):
        """A pinned marginal reduces to c x + v_hat(a - x)"""
        a = 1.0
        U = MomentAmbiguitySet([[MomentFunctionSpec.mean(a)]], [(a, a)])
        prob = FirstStageProblem([1.0], [-np.inf], [np.inf])
        result = solve_first_stage_moment(prob, CostVector.single(2.0, 0.0), U)
        self.assertAlmostEqual(result.x[0], a + 0.5, places=6)
        self.assertAlmostEqual(result.objective, a + 0.5, places=6)
        self.assertEqual(result.method, 'moment')
        print("✓ Moment first stage test passed")

    def test_joint_master_matches_pointwise_evaluation(self):
        q = CostVector.single(2.0, 0.0)
        U = MomentAmbiguitySet([[MomentFunctionSpec.mean(0.0), MomentFunctionSpec.mad(0.0, 0.5)]],
                               [(-3.0, 3.0)])
        prob = FirstStageProblem([1.0], [-3.0], [3.0])
        result = solve_first_stage_moment(prob, q, U, tol=1e-7)
        x_star = float(result.x[0])
        at_optimum = x_star + pragmatic_moment_drsir(q, U, [x_star]).value
        self.assertAlmostEqual(result.objective, at_optimum, places=4)
        for x in (x_star - 0.25, x_star + 0.25):
            self.assertGreaterEqual(x + pragmatic_moment_drsir(q, U, [x]).value, result.objective - 1e-4)
        history = result.history
        self.assertTrue(all(h['lower_bound'] <= h['upper_bound'] + 1e-9 for h in history))
        print("✓ Joint moment master test passed")


if __name__ == '__main__':
    unittest.main()
