#!/usr/bin/env python3
"""
SIR-DRO - Main Entry Point
Simple integer recourse under distributional uncertainty
"""

import argparse
import sys
from pathlib import Path

# Add src to Python path
sys.path.append(str(Path(__file__).parent / 'src'))

import pandas as pd

from config.config import get_config, update_config
from numerics import NumericalError
from problem_files import ProblemFileError, dump_canonical, load_problem
from sir_core import VARIANTS, expected_recourse, solve_first_stage

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

WASSERSTEIN_METHODS = ('pragmatic-w1', 'pragmatic-rowgen', 'standard-large-eps')
SOLVE_METHODS = WASSERSTEIN_METHODS + ('moment', 'hat', 'exact-grid')
ROBUST_MODES = ('none', 'pragmatic', 'standard', 'oracle')


class UsageError(Exception):
    """Request incompatible with the problem file"""


def _status(message, to_stderr):
    print(message, file=sys.stderr if to_stderr else sys.stdout)


def _write_csv(frame: pd.DataFrame, out):
    fmt = get_config().experiment.FLOAT_FORMAT
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False, float_format=fmt, lineterminator='\n')
    else:
        frame.to_csv(sys.stdout, index=False, float_format=fmt, lineterminator='\n')


def _parse_vector(text, m, name='--x'):
    try:
        values = [float(v) for v in text.replace(',', ' ').split()]
    except ValueError:
        raise UsageError(f"{name} expects {m} numbers, got {text!r}") from None
    if len(values) != m:
        raise UsageError(f"{name} expects {m} numbers, got {len(values)}")
    return values


# =======================
# Commands
# =======================
def cmd_eval(args):
    """Expected recourse, or a robust value, at a given tender point"""
    problem = load_problem(args.problem)
    x = _parse_vector(args.x, problem.m)
    row = {f"x{i + 1}": v for i, v in enumerate(x)}

    if args.robust == 'none':
        if not problem.marginals:
            raise UsageError("eval needs a [distribution] block")
        row.update(variant=args.variant, value=expected_recourse(problem.q, problem.reference, x, args.variant))
    elif problem.moments is not None:
        if args.robust != 'pragmatic':
            raise UsageError("Moment sets support only --robust pragmatic")
        from drsir_moment import pragmatic_moment_drsir
        result = pragmatic_moment_drsir(problem.q, problem.moments, x, args.tol)
        row.update(variant='moment', value=result.value, duality_gap=result.duality_gap)
    elif problem.has_ball:
        from drsir_wasserstein import (pragmatic_drsir_p1, pragmatic_drsir_rowgen,
                                       standard_drsir_large_eps, worst_case_oracle)
        ball = problem.ball
        if args.robust == 'pragmatic':
            value = (pragmatic_drsir_p1(problem.q, ball, x) if ball.p == 1
                     else pragmatic_drsir_rowgen(problem.q, ball, x, args.tol).objective)
        elif args.robust == 'standard':
            value = standard_drsir_large_eps(problem.q, ball, x)
        else:
            value = worst_case_oracle(problem.q, ball, x, variant='usc').value
        row.update(variant=args.robust, value=value)
    else:
        raise UsageError(f"--robust {args.robust} needs a [ball] or [moments] block")

    _write_csv(pd.DataFrame([row]), args.out)
    return EXIT_OK


def cmd_solve(args):
    """First-stage minimisation with the chosen recourse model"""
    problem = load_problem(args.problem)
    if problem.first_stage is None:
        raise UsageError("solve needs a [first_stage] block")
    method = args.method

    if method in WASSERSTEIN_METHODS:
        if not problem.has_ball:
            raise UsageError(f"Method {method} needs a [ball] block")
        from drsir_wasserstein import solve_first_stage_drsir
        result = solve_first_stage_drsir(problem.first_stage, problem.q, problem.ball, method, args.tol)
    elif method == 'moment':
        if problem.moments is None:
            raise UsageError("Method moment needs a [moments] block")
        from drsir_moment import solve_first_stage_moment
        result = solve_first_stage_moment(problem.first_stage, problem.q, problem.moments, args.tol)
    else:
        if problem.has_ball or problem.moments is not None:
            raise UsageError(f"Method {method} ignores ambiguity; drop the [ball]/[moments] block")
        result = solve_first_stage(problem.first_stage, problem.q, problem.reference, method)

    row = {f"x{i + 1}": v for i, v in enumerate(result.x)}
    row.update(objective=result.objective, method=result.method)
    certificate = result.certificate
    if certificate is not None and hasattr(certificate, 'lam'):
        row['lambda'] = certificate.lam
    _write_csv(pd.DataFrame([row]), args.out)

    if args.log:
        _write_csv(pd.DataFrame(result.history), args.log)
    return EXIT_OK


def cmd_experiment(args):
    """Run a named experiment; CSV to --out or stdout, PASS/FAIL status line"""
    from experiments import available, run_experiment

    if args.name not in available():
        raise UsageError(f"Unknown experiment {args.name!r}; available: {', '.join(available())}")
    kwargs = {}
    if args.name == 'fig-convexity':
        kwargs['qminus'] = args.qminus
    if args.name == 'normal-bounds':
        kwargs['empirical'] = args.empirical
    result = run_experiment(args.name, **kwargs)
    _write_csv(result.table, args.out)
    _status(result.status_line, to_stderr=not args.out)
    return EXIT_OK if result.passed else EXIT_NUMERICAL


def cmd_dump_canonical(args):
    problem = load_problem(args.problem)
    text = dump_canonical(problem)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def generate_sample_problems(args=None):
    """Write the sample problem files"""
    print("\nGenerating sample problem files...")
    try:
        from data.sample_data_generator import generate_sample_problems as gen_problems
        written = gen_problems()
        for path in written:
            print(f"✓ Wrote {path}")
        return EXIT_OK
    except Exception as e:
        print(f"✗ Error generating sample problems: {e}")
        return EXIT_NUMERICAL


def run_tests(args=None):
    """Run unit tests and the performance checks"""
    print("\nRunning system tests...")
    import unittest

    root = Path(__file__).parent
    suite = unittest.defaultTestLoader.discover(str(root / 'tests'), top_level_dir=str(root))
    outcome = unittest.TextTestRunner(verbosity=1).run(suite)
    try:
        from tests.test_system import run_performance_tests
        performance_ok = run_performance_tests()
    except Exception as e:
        print(f"✗ Error running performance tests: {e}")
        performance_ok = False
    return EXIT_OK if outcome.wasSuccessful() and performance_ok else EXIT_NUMERICAL


def show_system_info(args=None):
    """Display system information"""
    config = get_config()

    print("\n" + "=" * 60)
    print("SIMPLE INTEGER RECOURSE UNDER DISTRIBUTIONAL UNCERTAINTY")
    print("=" * 60)

    print(f"Application: {config.APP_NAME} v{config.VERSION}")
    print(f"Description: {config.DESCRIPTION}")

    print("\nConfiguration:")
    print(f"  - LP tolerance: {config.numerics.LP_TOLERANCE}")
    print(f"  - Oracle grid step: {config.solver.ORACLE_GRID_STEP}")
    print(f"  - Row generation tolerance: {config.solver.ROWGEN_INNER_TOL}")
    print(f"  - Moment tolerance: {config.solver.MOMENT_TOL}")
    print(f"  - Threads: {config.experiment.THREADS}")

    print("\nAvailable Commands:")
    print("  python main.py eval FILE --x X [--variant V] [--robust R]  - Evaluate recourse")
    print("  python main.py solve FILE --method M                       - Solve the first stage")
    print("  python main.py experiment NAME                             - Run a named experiment")
    print("  python main.py dump-canonical FILE                         - Print the canonical file")
    print("  python main.py generate                                    - Write sample problem files")
    print("  python main.py test                                        - Run system tests")
    print("  python main.py info                                        - Show system information")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(description='Simple integer recourse under distributional uncertainty')
    parser.add_argument('--dump-canonical', metavar='FILE', dest='dump_file',
                        help='Print the canonical form of a problem file and exit')
    parser.add_argument('--verbose', action='store_true', help='Print solver iteration traces')
    sub = parser.add_subparsers(dest='command')

    p_eval = sub.add_parser('eval', help='Evaluate expected recourse at a tender point')
    p_eval.add_argument('problem')
    p_eval.add_argument('--x', required=True, help='Tender point, space or comma separated')
    p_eval.add_argument('--variant', default='exact', choices=VARIANTS)
    p_eval.add_argument('--robust', default='none', choices=ROBUST_MODES)
    p_eval.add_argument('--tol', type=float, default=None)
    p_eval.add_argument('--out')
    p_eval.set_defaults(handler=cmd_eval)

    p_solve = sub.add_parser('solve', help='Solve the first-stage problem')
    p_solve.add_argument('problem')
    p_solve.add_argument('--method', default='pragmatic-w1', choices=SOLVE_METHODS)
    p_solve.add_argument('--tol', type=float, default=None)
    p_solve.add_argument('--out')
    p_solve.add_argument('--log', help='Iteration log CSV')
    p_solve.set_defaults(handler=cmd_solve)

    p_exp = sub.add_parser('experiment', help='Run a named experiment')
    p_exp.add_argument('name')
    p_exp.add_argument('--qminus', type=float, default=0.0)
    p_exp.add_argument('--empirical', action='store_true', help='Also compute the empirical gap')
    p_exp.add_argument('--out')
    p_exp.set_defaults(handler=cmd_experiment)

    p_dump = sub.add_parser('dump-canonical', help='Print the canonical form of a problem file')
    p_dump.add_argument('problem')
    p_dump.add_argument('--out')
    p_dump.set_defaults(handler=cmd_dump_canonical)

    sub.add_parser('generate', help='Write sample problem files').set_defaults(handler=generate_sample_problems)
    sub.add_parser('test', help='Run system tests').set_defaults(handler=run_tests)
    sub.add_parser('info', help='Show system information').set_defaults(handler=show_system_info)
    return parser


def main(argv=None):
    """Main entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        update_config({'solver': {'verbose': True}})

    if args.dump_file:
        args.problem, args.out = args.dump_file, None
        handler = cmd_dump_canonical
    else:
        handler = getattr(args, 'handler', show_system_info)

    try:
        return handler(args)
    except (ProblemFileError, UsageError) as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f"✗ Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
