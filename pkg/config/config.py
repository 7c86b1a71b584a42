import os
from dataclasses import dataclass, field
from typing import Dict, Any


def _threads_from_env() -> int:
    raw = os.environ.get('SIR_DRO_THREADS', '')
    try:
        threads = int(raw)
    except ValueError:
        threads = os.cpu_count() or 1
    return max(1, threads)


# =======================
# Numerics Configuration
# =======================
@dataclass
class NumericsConfig:
    """Tolerances for the LP solver and polynomial kernels"""

    # Revised simplex
    LP_TOLERANCE: float = 1e-9
    LP_MAX_ITERATIONS: int = 50000
    BLAND_AFTER_DEGENERATE: int = 50
    SINGULAR_PIVOT_TOL: float = 1e-12

    # Piecewise polynomials
    BREAKPOINT_TOL: float = 1e-12
    ROOT_TOL: float = 1e-10
    MAX_DENSITY_DEGREE: int = 4

    # 1-D convex search
    GOLDEN_TOL: float = 1e-9
    GOLDEN_MAX_ITERATIONS: int = 500


# =======================
# Distribution Configuration
# =======================
@dataclass
class DistributionConfig:
    """Configuration for distributions and transport distances"""

    MASS_TOL: float = 1e-10
    ATOM_TOL: float = 1e-12
    NEGATIVE_DENSITY_TOL: float = 1e-12

    # Quantile coupling for p > 1
    QUANTILE_TOL: float = 1e-10
    QUANTILE_NODES: int = 2048

    # Truncated normal spline
    NORMAL_TRUNCATION: float = 8.0
    NORMAL_SEGMENTS: int = 64


# =======================
# Solver Configuration
# =======================
@dataclass
class SolverConfig:
    """Configuration for first-stage and DRO solvers"""

    EXACT_GRID_STEP: float = 1e-3

    # Worst-case oracle
    ORACLE_GRID_STEP: float = 1e-3
    ORACLE_RANGE_PAD: float = 2.0
    ORACLE_TOL: float = 1e-6

    # Wasserstein row generation
    ROWGEN_INNER_TOL: float = 1e-7
    ROWGEN_LAMBDA_TOL: float = 1e-6
    ROWGEN_MAX_ITERATIONS: int = 200
    ROWGEN_LAMBDA_WIDENINGS: int = 6

    # Moment cutting planes
    MOMENT_TOL: float = 1e-7
    MOMENT_MAX_ITERATIONS: int = 500
    MOMENT_INITIAL_GRID: int = 9
    MOMENT_FALLBACK_STEP: float = 1e-4
    MOMENT_PRIMAL_GRID_STEP: float = 1e-3

    # Unbounded first-stage boxes are searched over the atom hull widened by this pad
    FIRST_STAGE_WINDOW: float = 3.0

    VERBOSE: bool = False


# =======================
# Experiment Configuration
# =======================
@dataclass
class ExperimentConfig:
    """Configuration for experiments and CSV output"""

    GAP_GRID_STEP: float = 1e-2
    GAP_REFINE_FACTOR: int = 10
    THREADS: int = field(default_factory=_threads_from_env)
    FLOAT_FORMAT: str = '%.17g'
    OUTPUT_DIR: str = 'results'


# =======================
# App Configuration
# =======================
@dataclass
class AppConfig:
    """Main application configuration"""

    # Application info
    APP_NAME: str = "SIR-DRO"
    VERSION: str = "1.0.0"
    DESCRIPTION: str = ("Simple integer recourse models under distributional uncertainty: "
                        "exact recourse, Wasserstein and moment DRSIR, error bounds")

    # Components
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    distributions: DistributionConfig = field(default_factory=DistributionConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary"""
        return {
            'app': {
                'name': self.APP_NAME,
                'version': self.VERSION,
                'description': self.DESCRIPTION
            },
            'numerics': {
                'lp_tolerance': self.numerics.LP_TOLERANCE,
                'lp_max_iterations': self.numerics.LP_MAX_ITERATIONS,
                'max_density_degree': self.numerics.MAX_DENSITY_DEGREE
            },
            'solver': {
                'exact_grid_step': self.solver.EXACT_GRID_STEP,
                'oracle_grid_step': self.solver.ORACLE_GRID_STEP,
                'moment_tol': self.solver.MOMENT_TOL,
                'verbose': self.solver.VERBOSE
            },
            'experiment': {
                'threads': self.experiment.THREADS,
                'gap_grid_step': self.experiment.GAP_GRID_STEP
            }
        }


# =======================
# Global Configuration
# =======================
config = AppConfig()


def get_config():
    """Get application configuration"""
    return config


def update_config(new_config: Dict[str, Any]):
    """Update configuration with new values"""
    global config

    for section in ('numerics', 'distributions', 'solver', 'experiment'):
        if section in new_config:
            target = getattr(config, section)
            for key, value in new_config[section].items():
                attr = key.upper()
                if hasattr(target, attr):
                    setattr(target, attr, value)

    if config.solver.VERBOSE:
        print("Configuration updated successfully")
