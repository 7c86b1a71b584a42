import io
import math
import os
import sys
import unittest

import numpy as np
import pandas as pd

# Add repo root and src to path
ROOT = os.path.join(os.path.dirname(__file__), '..')
sys.path.append(ROOT)
sys.path.append(os.path.join(ROOT, 'src'))

from bounds import (REPORT_COLUMNS, BoundReport, H, bound_G, bound_G_star, bound_H_tv, bound_g,
                    bound_sweep, drsir_sandwich, dyadic_distribution, dyadic_family,
                    empirical_gap, error_bound_convex_approx, switch_point, total_variation,
                    write_reports)
from distributions import Distribution1D, ProductDistribution, gamma_transform, wasserstein_1d
from drsir_wasserstein import GridSpec, WassersteinBall, worst_case_oracle
from sir_core import CostVector


class TestWassersteinBounds(unittest.TestCase):

    def test_one_dimensional_bound(self):
        self.assertAlmostEqual(bound_g(1.0, 0.5), 1.0)
        self.assertAlmostEqual(bound_g(2.0, 1.0), 3.0)
        self.assertAlmostEqual(bound_g(1.0, 0.08), 0.4)
        self.assertEqual(bound_g(3.0, 0.0), 0.0)
        with self.assertRaises(ValueError):
            bound_g(1.0, -0.1)

    def test_multivariate_bound(self):
        qbar = [3.0, 4.0]
        self.assertAlmostEqual(switch_point(qbar), 25.0 / 32.0)
        self.assertAlmostEqual(bound_G(qbar, 0.5), 5.0)
        self.assertAlmostEqual(bound_G(qbar, 1.0), 7.125)
        eps_bar = switch_point(qbar)
        self.assertAlmostEqual(bound_G(qbar, eps_bar), bound_G(qbar, eps_bar + 1e-12), places=9)
        print("✓ Multivariate bound test passed")

    def test_reduces_to_one_dimension(self):
        for eps in (0.1, 0.5, 0.9, 2.0):
            self.assertAlmostEqual(bound_G([2.0], eps), bound_g(2.0, eps))

    def test_excess_bound(self):
        self.assertAlmostEqual(bound_G_star([2.0], 5.0), 1.0)
        table = bound_sweep([3.0, 4.0], np.linspace(0.0, 3.0, 31))
        self.assertEqual(list(table.columns), ['eps', 'g', 'G', 'G_star'])
        self.assertTrue(np.all(table['G_star'] >= -1e-12))
        self.assertTrue(np.all(np.diff(table['G']) >= 0))
        print("✓ Excess bound test passed")


class TestTotalVariationBounds(unittest.TestCase):

    def test_H(self):
        self.assertAlmostEqual(H(0.7979), 0.7979 / 8.0)
        self.assertAlmostEqual(H(4.0), 0.5)
        self.assertAlmostEqual(H(8.0), 0.75)
        self.assertEqual(H(math.inf), 1.0)
        self.assertAlmostEqual(bound_H_tv([1.0, 2.0], [2.0, 8.0]), 0.25 + 1.5)

    def test_total_variation_of_densities(self):
        self.assertAlmostEqual(total_variation(Distribution1D.uniform(0.0, 2.0)), 1.0)
        self.assertEqual(total_variation(Distribution1D.point_mass(0.0)), math.inf)
        self.assertAlmostEqual(total_variation(Distribution1D.normal(0.0, 1.0)), 0.7979, places=3)

    def test_dyadic_family(self):
        for n in (1, 2, 3):
            d = dyadic_distribution(n)
            self.assertAlmostEqual(d.density.integrate(), 1.0)
            self.assertAlmostEqual(total_variation(d), 2.0 ** (n + 1))
        with self.assertRaises(ValueError):
            dyadic_distribution(0)
        print("✓ Dyadic family test passed")


class TestConvexApproximationBounds(unittest.TestCase):

    def test_normal_case(self):
        q = CostVector.single(1.0, 0.0)
        P = ProductDistribution([Distribution1D.normal(0.0, 1.0)])
        report = error_bound_convex_approx(q, P, 'alpha', 0.0, case='normal')
        self.assertAlmostEqual(report.wasserstein_distance, 0.0665, delta=2e-3)
        self.assertTrue(0.35 <= report.bound_wass <= 0.39)
        self.assertAlmostEqual(report.bound_tv, 0.0997, delta=1e-3)
        print("✓ Normal bound test passed")

    def test_empirical_gap_within_bound(self):
        q = CostVector.single(1.0, 0.0)
        P = ProductDistribution([Distribution1D.uniform(0.0, 1.5)])
        report = error_bound_convex_approx(q, P, 'shifted-lp', empirical=True)
        self.assertIsNotNone(report.empirical_gap)
        self.assertLessEqual(report.empirical_gap, report.bound_wass + 1e-9)
        self.assertGreater(report.empirical_gap, 0.0)

    def test_point_mass_gap(self):
        """At a point mass the exact and convex recourse differ by up to q+/2"""
        q = CostVector.single(2.0, 0.0)
        P = ProductDistribution([Distribution1D.point_mass(0.0)])
        self.assertAlmostEqual(empirical_gap(q, P, 'shifted-lp'), 1.0, places=6)

    def test_wasserstein_shrinks_on_dyadic_family(self):
        reports = dyadic_family([1, 2, 3, 4])
        distances = [r.wasserstein_distance for r in reports]
        self.assertTrue(all(b < a for a, b in zip(distances, distances[1:])))
        tv = [r.bound_tv for r in reports]
        self.assertTrue(all(b > a for a, b in zip(tv, tv[1:])))
        self.assertEqual(reports[2].inputs['n'], 3)

    def test_report_csv(self):
        report = BoundReport('case-a', 0.1, 0.2, bound_tv=0.05)
        buffer = io.StringIO()
        write_reports([report], buffer)
        frame = pd.read_csv(io.StringIO(buffer.getvalue()))
        self.assertEqual(list(frame.columns), REPORT_COLUMNS)
        self.assertEqual(frame['W1'].iloc[0], 0.1)
        self.assertTrue(math.isnan(frame['empirical_gap'].iloc[0]))
        with self.assertRaises(ValueError):
            BoundReport('bad', -1.0, 0.0)
        print("✓ Report CSV test passed")

    def test_unknown_approximation(self):
        q = CostVector.single(1.0, 0.0)
        P = ProductDistribution([Distribution1D.uniform(0.0, 1.0)])
        with self.assertRaises(ValueError):
            error_bound_convex_approx(q, P, 'midpoint')


class TestDRSIRBracket(unittest.TestCase):

    def test_bracket_contains_oracle_value(self):
        q = CostVector.single(1.0, 0.0)
        P = ProductDistribution([Distribution1D.discrete([0.1, 0.45, 0.8], [0.3, 0.4, 0.3])])
        ball = WassersteinBall(P, 1.0, 0.2)
        lower, upper = drsir_sandwich(q, ball, [0.0])
        value = worst_case_oracle(q, ball, [0.0], GridSpec(step=0.01)).value
        self.assertLessEqual(lower, value + 1e-9)
        self.assertGreaterEqual(upper, value - 1e-9)
        print("✓ DRSIR bracket test passed")

    def test_random_instances(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            d = Distribution1D.discrete(np.round(rng.uniform(-1.5, 1.5, n), 2))
            q = CostVector.single(*np.round(rng.uniform(0.2, 3.0, 2), 2))
            w1 = wasserstein_1d(d, gamma_transform(d), 1.0)
            ball = WassersteinBall(ProductDistribution([d]), 1.0, w1 + float(rng.uniform(0.0, 0.5)))
            x = [float(rng.uniform(-1.0, 1.0))]
            lower, upper = drsir_sandwich(q, ball, x)
            value = worst_case_oracle(q, ball, x, GridSpec(step=0.01)).value
            self.assertLessEqual(lower, value + 1e-2)
            self.assertGreaterEqual(upper, value - 1e-2)


if __name__ == '__main__':
    unittest.main()
