import os
import sys
import tempfile
import time
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

# Add repo root and src to path
ROOT = os.path.join(os.path.dirname(__file__), '..')
sys.path.append(ROOT)
sys.path.append(os.path.join(ROOT, 'src'))

import main
from data.sample_data_generator import generate_sample_problems, sample_problems
from distributions import Distribution1D, ProductDistribution
from drsir_moment import MomentAmbiguitySet, MomentFunctionSpec, pragmatic_moment_drsir
from drsir_wasserstein import GridSpec, WassersteinBall, pragmatic_drsir_rowgen, worst_case_oracle
from experiments import available, bound_curves, fig_convexity, run_experiment, tightness
from problem_files import dump_canonical, load_problem, parse_problem
from sir_core import CostVector


class TestCommandLine(unittest.TestCase):

    def setUp(self):
        """Write the sample problems into a scratch directory"""
        print("Setting up test environment...")
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.paths = {p.stem: p for p in generate_sample_problems(self.tmp / 'problems')}

    def tearDown(self):
        self._tmp.cleanup()

    def run_cli(self, *argv):
        out = self.tmp / 'out.csv'
        code = main.main([*argv, '--out', str(out)])
        return code, (pd.read_csv(out) if code == main.EXIT_OK and out.exists() else None)

    def test_generated_files_load(self):
        self.assertEqual(set(self.paths), set(sample_problems()))
        for name, path in self.paths.items():
            problem = load_problem(path)
            self.assertEqual(dump_canonical(problem), path.read_text(), msg=name)
        print("✓ Sample problem files test passed")

    def test_eval(self):
        code, frame = self.run_cli('eval', str(self.paths['pragmatic']), '--x', '0.5')
        self.assertEqual(code, main.EXIT_OK)
        self.assertAlmostEqual(frame['value'].iloc[0], 6.0)

        code, frame = self.run_cli('eval', str(self.paths['pragmatic']), '--x', '0.5', '--robust', 'pragmatic')
        self.assertEqual(code, main.EXIT_OK)
        self.assertAlmostEqual(frame['value'].iloc[0], 7.0)
        print("✓ CLI eval test passed")

    def test_solve(self):
        code, frame = self.run_cli('solve', str(self.paths['pragmatic']), '--method', 'pragmatic-w1')
        self.assertEqual(code, main.EXIT_OK)
        self.assertAlmostEqual(frame['x1'].iloc[0], 3.5)
        self.assertAlmostEqual(frame['objective'].iloc[0], 4.5)
        self.assertEqual(frame['method'].iloc[0], 'pragmatic-w1')
        print("✓ CLI solve test passed")

    def test_output_is_deterministic(self):
        outputs = []
        for _ in range(2):
            code, _ = self.run_cli('eval', str(self.paths['discrete_2d']), '--x', '0.25,-0.5')
            self.assertEqual(code, main.EXIT_OK)
            outputs.append((self.tmp / 'out.csv').read_bytes())
        self.assertEqual(outputs[0], outputs[1])

    def test_dump_canonical(self):
        target = self.tmp / 'canonical.txt'
        self.assertEqual(main.main(['dump-canonical', str(self.paths['moments']), '--out', str(target)]),
                         main.EXIT_OK)
        self.assertEqual(parse_problem(target.read_text()), load_problem(self.paths['moments']))

    def test_usage_errors(self):
        broken = self.tmp / 'broken.txt'
        broken.write_text("[cost]\nq 1 nope\n")
        self.assertEqual(main.main(['eval', str(broken), '--x', '0']), main.EXIT_USAGE)
        self.assertEqual(main.main(['eval', str(self.paths['pragmatic']), '--x', '0 1']), main.EXIT_USAGE)
        self.assertEqual(main.main(['solve', str(self.paths['moments']), '--method', 'hat']), main.EXIT_USAGE)
        self.assertEqual(main.main(['solve', str(self.paths['pragmatic']), '--method', 'moment']),
                         main.EXIT_USAGE)
        self.assertEqual(main.main(['experiment', 'no-such-experiment']), main.EXIT_USAGE)
        with self.assertRaises(SystemExit) as ctx:
            main.main(['solve', str(self.paths['pragmatic']), '--method', 'simulated-annealing'])
        self.assertEqual(ctx.exception.code, 2)
        print("✓ CLI usage error test passed")

    def test_experiment_command(self):
        code, frame = self.run_cli('experiment', 'bound-curves')
        self.assertEqual(code, main.EXIT_OK)
        self.assertEqual(list(frame.columns), ['eps', 'g', 'G', 'G_star'])


class TestExperiments(unittest.TestCase):

    def test_registry(self):
        self.assertEqual(available(), ['bound-curves', 'dyadic-family', 'fig-convexity',
                                       'normal-bounds', 'tightness'])
        with self.assertRaises(ValueError):
            run_experiment('unknown')

    def test_bound_curves(self):
        result = bound_curves((3.0, 4.0), eps_max=1.0, step=0.05)
        self.assertTrue(result.passed, result.message)
        self.assertTrue(result.status_line.startswith('PASS'))

    def test_tightness_at_half(self):
        result = tightness(atoms=100, eps_values=(0.25, 0.5), oracle_step=1e-2)
        self.assertTrue(result.passed, result.message)
        half = result.table.loc[np.isclose(result.table['eps'], 0.5), 'gap'].iloc[0]
        self.assertAlmostEqual(half, 1.0, delta=2e-2)
        print("✓ Tightness experiment test passed")

    def test_convexity_for_large_radius(self):
        result = fig_convexity(x_step=0.25, eps_values=(0.5, 1.0), oracle_step=1e-2)
        self.assertTrue(result.passed, result.message)
        methods = set(result.table.loc[result.table['eps'] == 1.0, 'method'])
        self.assertEqual(methods, {'closed-form'})

    def test_nonconvexity_for_small_radius(self):
        """With q- > 0 the standard model is not convex at eps = 1/4"""
        result = fig_convexity(qminus=1.0, x_step=0.25, eps_values=(0.25,), oracle_step=1e-2)
        self.assertTrue(result.passed, result.message)
        self.assertEqual(set(result.table['method']), {'oracle'})
        values = result.table.set_index('x')['value']
        # x = -1/4, 0, 1/4 give 8/3, 5/2, 2
        self.assertAlmostEqual(values[0.0] - 0.5 * (values[-0.25] + values[0.25]), 1.0 / 6.0, delta=1e-6)
        print("✓ Small-radius nonconvexity test passed")


def run_performance_tests():
    """Run performance and scalability tests"""
    print("\n" + "=" * 50)
    print("PERFORMANCE TESTS")
    print("=" * 50)

    ok = True
    q = CostVector.single(2.0, 1.0)
    rng = np.random.default_rng(0)

    for size in [100, 500, 1000]:
        print(f"\nTesting with {size} atoms...")
        reference = ProductDistribution([Distribution1D.discrete(np.sort(rng.normal(0.0, 1.0, size)))])
        ball = WassersteinBall(reference, 1.0, 0.2)
        try:
            start_time = time.time()
            oracle = worst_case_oracle(q, ball, [0.3], GridSpec(step=1e-2))
            print(f"  Worst-case oracle: {oracle.value:.6f} in {time.time() - start_time:.2f} seconds")

            start_time = time.time()
            certificate = pragmatic_drsir_rowgen(q, WassersteinBall(reference, 2.0, 0.2), [0.3])
            print(f"  Row generation: {certificate.objective:.6f} in {time.time() - start_time:.2f} seconds")
        except Exception as e:
            print(f"  ✗ Error: {e}")
            ok = False

    print("\nTesting moment cutting planes...")
    U = MomentAmbiguitySet([[MomentFunctionSpec.mean(0.0), MomentFunctionSpec.mad(0.0, 0.5)]] * 3,
                           [(-3.0, 3.0)] * 3)
    try:
        start_time = time.time()
        result = pragmatic_moment_drsir(CostVector([(2.0, 1.0)] * 3), U, [0.0, 0.4, -0.7])
        print(f"  Moment DRSIR: {result.value:.6f} (gap {result.duality_gap:.2e}) "
              f"in {time.time() - start_time:.2f} seconds")
    except Exception as e:
        print(f"  ✗ Error: {e}")
        ok = False

    print("✓ Performance tests completed" if ok else "✗ Performance tests failed")
    return ok


if __name__ == '__main__':
    # Run unit tests
    unittest.main(exit=False, verbosity=2)

    # Run performance tests
    run_performance_tests()
