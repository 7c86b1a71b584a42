import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.append(str(ROOT))
sys.path.append(str(ROOT / 'src'))

from distributions import Distribution1D
from drsir_moment import MomentAmbiguitySet, MomentFunctionSpec
from problem_files import ProblemFile, write_problem
from sir_core import CostVector, FirstStageProblem


def sample_problems(a=3.0, seed=42):
    """Sample problems for the CLI, keyed by file stem"""
    rng = np.random.default_rng(seed)
    point = Distribution1D.point_mass(a)
    unbounded = FirstStageProblem([1.0], [-np.inf], [np.inf])

    problems = {
        # Point-mass newsvendor with a large type-1 ball
        'newsvendor': ProblemFile(CostVector.single(2.0, 0.0), [point], 1.0, 1.0,
                                  first_stage=unbounded),
        # Pragmatic model around a point mass; optimum a + 1/2
        'pragmatic': ProblemFile(CostVector.single(2.0, 0.0), [point], 1.0, 0.5,
                                 first_stage=unbounded),
        'stochastic_normal': ProblemFile(CostVector.single(2.0, 1.0), [Distribution1D.normal(0.0, 1.0)],
                                         first_stage=FirstStageProblem([0.5], [-5.0], [5.0])),
    }

    # Two dimensions, ten atoms each, type-2 ball
    marginals = []
    for _ in range(2):
        locations = np.round(rng.normal(0.0, 1.5, size=10), 3)
        masses = rng.dirichlet(np.ones(10))
        masses[-1] = 1.0 - masses[:-1].sum()
        marginals.append(Distribution1D.discrete(locations, masses))
    problems['discrete_2d'] = ProblemFile(CostVector([(2.0, 1.0), (1.0, 3.0)]), marginals, 2.0, 0.5,
                                          first_stage=FirstStageProblem([0.5, -0.5], [-4.0, -4.0], [4.0, 4.0]))

    # Mean and mean absolute deviation around zero
    moments = MomentAmbiguitySet([[MomentFunctionSpec.mean(0.0), MomentFunctionSpec.mad(0.0, 0.5)]],
                                 [(-3.0, 3.0)])
    problems['moments'] = ProblemFile(CostVector.single(2.0, 0.0), moments=moments,
                                      first_stage=FirstStageProblem([1.0], [-3.0], [3.0]))
    return problems


def generate_sample_problems(output_dir=None):
    """Write every sample problem in canonical form; returns the paths written"""
    output_dir = Path(output_dir) if output_dir else ROOT / 'data' / 'problems'
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, problem in sample_problems().items():
        path = output_dir / f"{name}.txt"
        write_problem(problem, path)
        written.append(path)
    return written


if __name__ == "__main__":
    for path in generate_sample_problems():
        print(f"Wrote {path}")
