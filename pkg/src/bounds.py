"""
Stability and error bounds for simple integer recourse: the Wasserstein bounds
g, G and G*, the total-variation bound H, and bound comparison reports.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.config import get_config
from distributions import (Distribution1D, ProductDistribution, gamma_transform,
                           product_gamma, product_gamma_alpha, wasserstein_1d)
from drsir_wasserstein import WassersteinBall, pragmatic_drsir_p1
from sir_core import CostVector, expected_recourse

REPORT_COLUMNS = ['case', 'W1', 'bound_wass', 'bound_tv', 'empirical_gap']
APPROXIMATIONS = ('shifted-lp', 'alpha')


# =======================
# Wasserstein bounds
# =======================
def bound_g(qinf: float, eps: float) -> float:
    """One-dimensional bound: qinf sqrt(2 eps) up to eps = 1/2, then linear."""
    if qinf < 0 or eps < 0:
        raise ValueError("bound_g needs qinf >= 0 and eps >= 0")
    if eps <= 0.5:
        return float(qinf * math.sqrt(2.0 * eps))
    return float(qinf * (eps + 0.5))


def _qbar(qbar) -> np.ndarray:
    qbar = np.atleast_1d(np.asarray(qbar, dtype=float))
    if np.any(qbar < 0):
        raise ValueError("Cost maxima must be nonnegative")
    return qbar


def switch_point(qbar) -> float:
    """eps_bar = ||qbar||_2^2 / (2 ||qbar||_inf^2), where G turns linear."""
    qbar = _qbar(qbar)
    qinf = float(np.max(qbar))
    if qinf == 0:
        return 0.5
    return float(0.5 * np.sum(qbar ** 2) / qinf ** 2)


def bound_G(qbar, eps: float) -> float:
    """Multivariate bound on the recourse error for a Wasserstein-1 perturbation eps."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    qbar = _qbar(qbar)
    norm2 = float(np.linalg.norm(qbar))
    qinf = float(np.max(qbar))
    eps_bar = switch_point(qbar)
    if eps <= eps_bar:
        return norm2 * math.sqrt(2.0 * eps)
    return norm2 * math.sqrt(2.0 * eps_bar) + qinf * (eps - eps_bar)


def bound_G_star(qbar, eps: float) -> float:
    """G(eps) - ||q||_inf eps, the excess of the standard over the pragmatic DRSIR."""
    qbar = _qbar(qbar)
    return bound_G(qbar, eps) - float(np.max(qbar)) * eps


# =======================
# Total variation bound
# =======================
def H(t: float) -> float:
    if t < 0:
        raise ValueError("Total variation must be nonnegative")
    if math.isinf(t):
        return 1.0
    if t <= 4.0:
        return t / 8.0
    return 1.0 - 2.0 / t


def bound_H_tv(qsums, tv_values) -> float:
    """sum_i (q_i+ + q_i-) H(|D|f_i) for independent marginals."""
    qsums = np.atleast_1d(np.asarray(qsums, dtype=float))
    tv_values = np.atleast_1d(np.asarray(tv_values, dtype=float))
    if qsums.shape != tv_values.shape:
        raise ValueError("One total variation per dimension is required")
    return float(sum(s * H(t) for s, t in zip(qsums, tv_values)))


def total_variation(d: Distribution1D) -> float:
    """|D|f of the density; infinite when the marginal has atoms."""
    if d.locations.size:
        return math.inf
    return d.density.total_variation()


def tv_bound(q: CostVector, P: ProductDistribution) -> float:
    return bound_H_tv(q.q_plus + q.q_minus, [total_variation(d) for d in P])


# =======================
# Convex approximation error
# =======================
@dataclass
class BoundReport:
    """Wasserstein distance to the convex approximation and the bounds it yields."""

    case: str
    wasserstein_distance: float
    bound_wass: float
    bound_tv: Optional[float] = None
    empirical_gap: Optional[float] = None
    inputs: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for name in ('wasserstein_distance', 'bound_wass', 'bound_tv', 'empirical_gap'):
            value = getattr(self, name)
            if value is not None and value < -1e-12:
                raise ValueError(f"{name} must be nonnegative, got {value}")

    def to_row(self) -> Dict[str, object]:
        return {
            'case': self.case,
            'W1': self.wasserstein_distance,
            'bound_wass': self.bound_wass,
            'bound_tv': math.nan if self.bound_tv is None else self.bound_tv,
            'empirical_gap': math.nan if self.empirical_gap is None else self.empirical_gap,
        }


def reports_frame(reports: Sequence[BoundReport]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in reports], columns=REPORT_COLUMNS)


def write_reports(reports: Sequence[BoundReport], path_or_buf) -> None:
    """CSV with one row per report; floats round-trip through %.17g."""
    fmt = get_config().experiment.FLOAT_FORMAT
    reports_frame(reports).to_csv(path_or_buf, index=False, float_format=fmt, lineterminator='\n')


def _approximating(P: ProductDistribution, approx: str, alpha):
    if approx == 'shifted-lp':
        return product_gamma(P)
    if approx == 'alpha':
        return product_gamma_alpha(P, 0.0 if alpha is None else alpha)
    raise ValueError(f"Unknown approximation {approx!r}; expected one of {APPROXIMATIONS}")


def _gap_window(d: Distribution1D) -> Tuple[float, float]:
    pad = get_config().solver.ORACLE_RANGE_PAD
    if d.has_density:
        # The far tails of a density carry no visible gap
        lo, hi = float(d.quantile(1e-6)), float(d.quantile(1.0 - 1e-6))
        if d.locations.size:
            lo, hi = min(lo, d.locations.min()), max(hi, d.locations.max())
    else:
        lo, hi = d.support()
    return lo - pad, hi + pad


def _parallel_map(fn, items):
    threads = get_config().experiment.THREADS
    if threads <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def empirical_gap(q: CostVector, P: ProductDistribution, approx='shifted-lp', alpha=None,
                  step=None) -> float:
    """sup over an x-grid of |Q(x) - Q_approx(x)|, summed over the separable dimensions."""
    cfg = get_config().experiment
    step = cfg.GAP_GRID_STEP if step is None else step
    approx_P = _approximating(P, approx, alpha)
    total = 0.0
    for i, (d, d_approx) in enumerate(zip(P, approx_P)):
        single = CostVector([q.pair(i)])
        exact_P, other_P = ProductDistribution([d]), ProductDistribution([d_approx])

        def gap(x):
            exact = expected_recourse(single, exact_P, [x], 'exact')
            if approx == 'shifted-lp':
                return abs(exact - expected_recourse(single, exact_P, [x], 'hat'))
            return abs(exact - expected_recourse(single, other_P, [x], 'exact'))

        lo, hi = _gap_window(d)
        xs = np.append(np.arange(lo, hi, step), hi)
        values = np.array(_parallel_map(gap, list(xs)))
        k = int(np.argmax(values))
        fine = np.linspace(xs[k] - step, xs[k] + step, 2 * cfg.GAP_REFINE_FACTOR + 1)
        refined = np.array(_parallel_map(gap, list(fine)))
        total += float(max(values[k], refined.max()))
    return total


def error_bound_convex_approx(q: CostVector, P: ProductDistribution, approx='shifted-lp',
                              alpha=None, empirical=False, case='') -> BoundReport:
    """Bound the uniform error of the convex approximation by G(W1(P, P_approx))."""
    if P.m != q.m:
        raise ValueError(f"Distribution has {P.m} marginals, costs have {q.m} dimensions")
    approx_P = _approximating(P, approx, alpha)
    distance = float(sum(wasserstein_1d(d, d_approx, 1.0) for d, d_approx in zip(P, approx_P)))
    report = BoundReport(
        case=case or approx,
        wasserstein_distance=distance,
        bound_wass=bound_G(q.qbar, distance),
        bound_tv=tv_bound(q, P),
        inputs={'approx': approx, 'alpha': alpha, 'q': q.pairs()},
    )
    if empirical:
        report.empirical_gap = empirical_gap(q, P, approx, alpha)
    return report


def bound_sweep(qbar, eps_values) -> pd.DataFrame:
    """Table of g, G and G* over a radius grid."""
    qbar = _qbar(qbar)
    qinf = float(np.max(qbar))
    rows = [{'eps': float(e), 'g': bound_g(qinf, e), 'G': bound_G(qbar, e),
             'G_star': bound_G_star(qbar, e)} for e in eps_values]
    return pd.DataFrame(rows, columns=['eps', 'g', 'G', 'G_star'])


# =======================
# Oscillating family
# =======================
def dyadic_distribution(n: int) -> Distribution1D:
    """Uniform on the even-indexed dyadic cells of width 2^-n in [0, 1]."""
    if n < 1:
        raise ValueError("The dyadic family starts at n = 1")
    width = 2.0 ** -n
    segments = [(k * width, (k + 1) * width, [2.0]) for k in range(0, 2 ** n, 2)]
    return Distribution1D.from_segments(segments)


def dyadic_family(ns: Sequence[int], q_plus: float = 1.0, alpha: float = 0.0) -> List[BoundReport]:
    """Wasserstein against total-variation bounds as the density oscillates faster."""
    q = CostVector.single(q_plus, 0.0)
    reports = _parallel_map(
        lambda n: error_bound_convex_approx(q, ProductDistribution([dyadic_distribution(n)]),
                                            'alpha', alpha, case=f"dyadic-{n}"),
        list(ns))
    for n, report in zip(ns, reports):
        report.inputs['n'] = n
    return reports


# =======================
# DRSIR bracket
# =======================
def drsir_sandwich(q: CostVector, ball: WassersteinBall, x) -> Tuple[float, float]:
    """Interval containing the standard DRSIR value for a type-1 ball.

    Lower end: pragmatic value minus ||q|| W1(P0, Gamma P0); upper end adds
    G*(eps + W1) + ||q|| W1.
    """
    if ball.p != 1:
        raise ValueError("The DRSIR bracket is stated for p = 1")
    w1 = float(sum(wasserstein_1d(d, gamma_transform(d), 1.0) for d in ball.reference))
    pragmatic = pragmatic_drsir_p1(q, ball, x)
    lower = pragmatic - q.qinf * w1
    upper = pragmatic + bound_G_star(q.qbar, ball.epsilon + w1) + q.qinf * w1
    return lower, upper
