import math
import os
import sys
import unittest

import numpy as np
from scipy.optimize import linprog

# Add repo root and src to path
ROOT = os.path.join(os.path.dirname(__file__), '..')
sys.path.append(ROOT)
sys.path.append(os.path.join(ROOT, 'src'))

from numerics import (LinearProgram, NumericalError, PiecewisePolynomial, lp_solve,
                      merge_breakpoints, minimize_convex_1d, poly_integrate)


class TestPiecewisePolynomial(unittest.TestCase):

    def setUp(self):
        """Tent on [0, 2] and a unit box on [1, 3)"""
        self.tent = PiecewisePolynomial([0.0, 1.0, 2.0], [[0.0, 1.0], [1.0, -1.0]])
        self.box = PiecewisePolynomial.constant(1.0, 1.0, 3.0)

    def test_evaluation_uses_local_coordinates(self):
        """Segments are evaluated in powers of t minus the left breakpoint"""
        self.assertAlmostEqual(self.tent(0.5), 0.5)
        self.assertAlmostEqual(self.tent(1.0), 1.0)
        self.assertAlmostEqual(self.tent(1.5), 0.5)
        self.assertEqual(self.tent(-3.0), 0.0)
        self.assertEqual(self.tent(7.0), 0.0)
        values = self.tent(np.array([0.25, 1.75]))
        np.testing.assert_allclose(values, [0.25, 0.25])
        print("✓ Piecewise evaluation test passed")

    def test_finite_ends_are_padded(self):
        self.assertEqual(self.box.n_segments, 3)
        self.assertTrue(math.isinf(self.box.breakpoints[0]))
        self.assertTrue(math.isinf(self.box.breakpoints[-1]))
        self.assertEqual(self.box.support(), (1.0, 3.0))
        print("✓ Padding test passed")

    def test_rejects_bad_breakpoints(self):
        with self.assertRaises(ValueError):
            PiecewisePolynomial([0.0, 0.0, 1.0], [[1.0], [1.0]])
        with self.assertRaises(ValueError):
            PiecewisePolynomial([0.0, 1.0], [[1.0], [2.0]])

    def test_arithmetic(self):
        total = self.tent + self.box
        self.assertAlmostEqual(total(1.5), 1.5)
        self.assertAlmostEqual(total(2.5), 1.0)
        product = self.tent * self.box
        self.assertAlmostEqual(product(0.5), 0.0)
        self.assertAlmostEqual(product(1.25), 0.75)
        scaled = 3.0 * self.tent - 1.0
        self.assertAlmostEqual(scaled(1.0), 2.0)
        self.assertAlmostEqual(scaled(5.0), -1.0)
        print("✓ Arithmetic test passed")

    def test_integrals(self):
        self.assertAlmostEqual(self.tent.integrate(), 1.0)
        self.assertAlmostEqual(self.tent.integrate(0.0, 1.0), 0.5)
        self.assertAlmostEqual(self.box.integrate(2.0, 10.0), 1.0)
        self.assertAlmostEqual(poly_integrate(self.tent, 0.5, 1.5), 0.75)
        signed = self.tent - 0.5 * PiecewisePolynomial.constant(1.0, 0.0, 2.0)
        self.assertAlmostEqual(signed.integrate(), 0.0)
        self.assertAlmostEqual(signed.integrate_abs(), 0.5)
        with self.assertRaises(NumericalError):
            PiecewisePolynomial.constant(1.0).integrate()
        print("✓ Integration test passed")

    def test_antiderivative_and_moving_average(self):
        anti = self.box.antiderivative()
        self.assertAlmostEqual(anti(0.0), 0.0)
        self.assertAlmostEqual(anti(2.0), 1.0)
        self.assertAlmostEqual(anti(10.0), 2.0)

        smooth = PiecewisePolynomial.constant(1.0, 0.0, 1.0).moving_average()
        # Tent of height one centred at 1/2
        self.assertAlmostEqual(smooth(0.5), 1.0)
        self.assertAlmostEqual(smooth(0.0), 0.5)
        self.assertAlmostEqual(smooth(1.25), 0.25)
        self.assertAlmostEqual(smooth.integrate(), 1.0)
        print("✓ Antiderivative test passed")

    def test_shift_and_jumps(self):
        moved = self.box.shifted(2.0)
        self.assertEqual(moved.support(), (3.0, 5.0))
        locations, sizes = self.box.jumps()
        nonzero = np.abs(sizes) > 0
        np.testing.assert_allclose(locations[nonzero], [1.0, 3.0])
        np.testing.assert_allclose(sizes[nonzero], [1.0, -1.0])
        self.assertAlmostEqual(self.box.total_variation(), 2.0)
        self.assertAlmostEqual(self.tent.total_variation(), 2.0)
        print("✓ Shift and jump test passed")

    def test_merge_breakpoints_collapses_near_duplicates(self):
        merged = merge_breakpoints([0.0, 1.0], [1.0 + 1e-15, 2.0])
        np.testing.assert_allclose(merged, [0.0, 1.0, 2.0])


class TestConvexSearch(unittest.TestCase):

    def test_quadratic_minimum(self):
        x, fx = minimize_convex_1d(lambda t: (t - 0.3) ** 2, -2.0, 2.0, tol=1e-10)
        self.assertAlmostEqual(x, 0.3, places=6)
        self.assertAlmostEqual(fx, 0.0, places=10)

    def test_flat_bottom_prefers_smaller_point(self):
        """Ties go to the smallest evaluated minimiser"""
        x, fx = minimize_convex_1d(lambda t: max(0.0, abs(t) - 1.0), -3.0, 3.0)
        self.assertEqual(fx, 0.0)
        self.assertLessEqual(x, 1.0)

    def test_rejects_bad_interval(self):
        with self.assertRaises(ValueError):
            minimize_convex_1d(lambda t: t, 1.0, 0.0)
        with self.assertRaises(ValueError):
            minimize_convex_1d(lambda t: t, 0.0, math.inf)


class TestLinearProgramming(unittest.TestCase):

    def _compare(self, c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None):
        """Solve with both solvers and compare objectives"""
        c = np.asarray(c, dtype=float)
        rows, senses, rhs = [], [], []
        if A_ub is not None:
            rows.extend(A_ub)
            senses.extend(['<='] * len(b_ub))
            rhs.extend(b_ub)
        if A_eq is not None:
            rows.extend(A_eq)
            senses.extend(['='] * len(b_eq))
            rhs.extend(b_eq)
        n = c.size
        lower = np.array([b[0] if b[0] is not None else -np.inf for b in bounds]) if bounds else None
        upper = np.array([b[1] if b[1] is not None else np.inf for b in bounds]) if bounds else None
        lp = LinearProgram(c, np.array(rows).reshape(-1, n), senses, rhs, lower, upper)
        ours = lp_solve(lp)
        reference = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                            bounds=bounds if bounds else (0, None), method='highs')
        self.assertTrue(ours.optimal)
        self.assertEqual(reference.status, 0)
        self.assertAlmostEqual(ours.objective, reference.fun, places=7)
        return ours

    def test_small_inequality_program(self):
        """Textbook production problem"""
        result = self._compare([-3.0, -5.0], A_ub=[[1, 0], [0, 2], [3, 2]], b_ub=[4, 12, 18])
        np.testing.assert_allclose(result.x, [2.0, 6.0], atol=1e-8)
        print("✓ Inequality LP test passed")

    def test_equalities_and_free_variables(self):
        self._compare([1.0, 2.0, -1.0],
                      A_ub=[[1, 1, 1]], b_ub=[10],
                      A_eq=[[1, -1, 0]], b_eq=[1],
                      bounds=[(None, None), (-2, 3), (0, 4)])
        print("✓ Equality LP test passed")

    def test_random_programs_match_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            A = rng.uniform(0.1, 2.0, size=(4, 5))
            b = rng.uniform(1.0, 5.0, size=4)
            c = -rng.uniform(0.5, 3.0, size=5)
            self._compare(c, A_ub=A, b_ub=b)
        print("✓ Random LP comparison test passed")

    def test_maximize_and_duals(self):
        """Duals are sensitivities of the reported objective"""
        lp = LinearProgram([3.0, 5.0], [[1, 0], [0, 2], [3, 2]], ['<=', '<=', '<='], [4, 12, 18],
                           maximize=True)
        result = lp_solve(lp)
        self.assertTrue(result.optimal)
        self.assertAlmostEqual(result.objective, 36.0)
        np.testing.assert_allclose(result.duals, [0.0, 1.5, 1.0], atol=1e-8)
        status, x, objective = result
        self.assertEqual(status, 'optimal')
        print("✓ Maximisation dual test passed")

    def test_duals_certify_optimality(self):
        """Row duals are dual feasible, complementary, and close the duality gap"""
        rng = np.random.default_rng(9)
        for _ in range(10):
            A = rng.uniform(0.1, 2.0, size=(4, 5))
            b = rng.uniform(1.0, 5.0, size=4)
            c = -rng.uniform(0.5, 3.0, size=5)
            result = lp_solve(LinearProgram(c, A, ['<='] * 4, b))
            y = result.duals
            reduced = c - A.T @ y
            self.assertTrue(np.all(y <= 1e-9))
            self.assertTrue(np.all(reduced >= -1e-8))
            np.testing.assert_allclose(y * (b - A @ result.x), 0.0, atol=1e-8)
            np.testing.assert_allclose(result.x * reduced, 0.0, atol=1e-8)
            self.assertAlmostEqual(float(b @ y), result.objective, places=8)

        # Hand-built dual of the production problem: min 4u + 12v + 18w, u + 3w >= 3, 2v + 2w >= 5
        dual = lp_solve(LinearProgram([4.0, 12.0, 18.0], [[1, 0, 3], [0, 2, 2]], ['>=', '>='], [3.0, 5.0]))
        self.assertAlmostEqual(dual.objective, 36.0)
        np.testing.assert_allclose(dual.x, [0.0, 1.5, 1.0], atol=1e-8)
        np.testing.assert_allclose(dual.duals, [2.0, 6.0], atol=1e-8)
        print("✓ LP dual certificate test passed")

    def test_greater_equal_rows(self):
        lp = LinearProgram([1.0, 1.0], [[1, 2], [3, 1]], ['>=', '>='], [4, 6])
        result = lp_solve(lp)
        self.assertTrue(result.optimal)
        self.assertAlmostEqual(result.objective, 2.8)

    def test_infeasible(self):
        lp = LinearProgram([1.0], [[1.0], [1.0]], ['<=', '>='], [1.0, 2.0])
        self.assertEqual(lp_solve(lp).status, 'infeasible')
        print("✓ Infeasible LP test passed")

    def test_unbounded(self):
        lp = LinearProgram([-1.0, 0.0], [[1.0, -1.0]], ['<='], [1.0])
        self.assertEqual(lp_solve(lp).status, 'unbounded')
        print("✓ Unbounded LP test passed")

    def test_redundant_equalities(self):
        lp = LinearProgram([1.0, 2.0], [[1, 1], [2, 2]], ['=', '='], [1.0, 2.0])
        result = lp_solve(lp)
        self.assertTrue(result.optimal)
        self.assertAlmostEqual(result.objective, 1.0)

    def test_validation(self):
        with self.assertRaises(ValueError):
            LinearProgram([1.0], [[1.0]], ['<'], [1.0])
        with self.assertRaises(ValueError):
            LinearProgram([1.0], [[1.0]], ['<='], [1.0], lower=[2.0], upper=[1.0])


if __name__ == '__main__':
    unittest.main()
