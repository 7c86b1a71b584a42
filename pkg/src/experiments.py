"""
Named experiments: each builds a table for external plotting and checks it
against an acceptance tolerance.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np
import pandas as pd

from bounds import (bound_g, bound_G, bound_G_star, bound_sweep, dyadic_family,
                    error_bound_convex_approx, reports_frame, switch_point)
from distributions import Distribution1D, ProductDistribution
from drsir_wasserstein import (GridSpec, WassersteinBall, large_eps_threshold,
                               standard_drsir_large_eps, worst_case_oracle)
from sir_core import CostVector, expected_recourse


@dataclass
class ExperimentResult:
    name: str
    table: pd.DataFrame
    passed: bool
    message: str

    @property
    def status_line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.message}"


def midpoint_violation(values: np.ndarray) -> float:
    """Largest f(x_k) - (f(x_{k-1}) + f(x_{k+1})) / 2 over an evenly spaced grid."""
    values = np.asarray(values, dtype=float)
    if values.size < 3:
        return 0.0
    return float(np.max(values[1:-1] - 0.5 * (values[:-2] + values[2:])))


def fig_convexity(qminus: float = 0.0, q_plus: float = 2.0, x_step: float = 0.05,
                  eps_values=(0.25, 0.5, 1.0), oracle_step: float = 1e-3) -> ExperimentResult:
    """Standard DRSIR value around a point-mass reference for several radii."""
    q = CostVector.single(q_plus, qminus)
    reference = ProductDistribution([Distribution1D.point_mass(0.0)])
    xs = np.round(np.arange(-2.0, 2.0 + 0.5 * x_step, x_step), 12)
    rows, violations = [], {}
    for eps in eps_values:
        ball = WassersteinBall(reference, 1.0, eps)
        closed_form = ball.budget >= large_eps_threshold(q)
        values = []
        for x in xs:
            if closed_form:
                value, method = standard_drsir_large_eps(q, ball, [x]), 'closed-form'
            else:
                value = worst_case_oracle(q, ball, [x], GridSpec(step=oracle_step)).value
                method = 'oracle'
            values.append(value)
            rows.append({'x': x, 'eps': eps, 'value': value, 'method': method})
        violations[eps] = midpoint_violation(values)

    table = pd.DataFrame(rows, columns=['x', 'eps', 'value', 'method'])
    if qminus == 0:
        checked = {e: v for e, v in violations.items() if e >= 1.0}
        passed = bool(checked) and all(v <= 1e-8 for v in checked.values())
        message = f"midpoint violations for eps >= 1: {checked}"
    else:
        small = min(eps_values)
        passed = violations[small] > 1e-3
        message = f"midpoint violation at eps={small}: {violations[small]:.4g}"
    return ExperimentResult('fig-convexity', table, passed, message)


def tightness(q_plus: float = 1.0, atoms: int = 1000, a: float = 0.0,
              eps_values=(0.05, 0.1, 0.25, 0.5), oracle_step: float = 1e-3) -> ExperimentResult:
    """Worst-case recourse change around a discretised uniform law against g(eps)."""
    q = CostVector.single(q_plus, 0.0)
    locations = a + (np.arange(atoms) + 0.5) / atoms
    reference = ProductDistribution([Distribution1D.discrete(locations)])
    base = expected_recourse(q, reference, [a], 'exact')
    rows = []
    for eps in eps_values:
        ball = WassersteinBall(reference, 1.0, eps)
        grid = GridSpec(step=oracle_step)
        upper = worst_case_oracle(q, ball, [a], grid, sense='max').value
        lower = worst_case_oracle(q, ball, [a], grid, sense='min').value
        rows.append({'eps': eps, 'gap': max(upper - base, base - lower), 'g': bound_g(q_plus, eps)})
    table = pd.DataFrame(rows, columns=['eps', 'gap', 'g'])

    within = bool(np.all(table['gap'] <= table['g'] + 1e-2))
    half = table.loc[np.isclose(table['eps'], 0.5), 'gap']
    reaches = bool(half.size) and float(half.iloc[0]) >= 0.98 * q_plus
    message = f"gap at eps=1/2: {float(half.iloc[0]) if half.size else float('nan'):.4f}; all gaps within g: {within}"
    return ExperimentResult('tightness', table, within and reaches, message)


def normal_bounds(q_plus: float = 1.0, empirical: bool = False) -> ExperimentResult:
    """Wasserstein against total-variation bound for a standard normal marginal."""
    q = CostVector.single(q_plus, 0.0)
    P = ProductDistribution([Distribution1D.normal(0.0, 1.0)])
    report = error_bound_convex_approx(q, P, 'alpha', 0.0, empirical=empirical, case='normal')
    table = reports_frame([report])
    wass_ok = 0.35 * q_plus <= report.bound_wass <= 0.39 * q_plus
    tv_ok = 0.095 * q_plus <= report.bound_tv <= 0.105 * q_plus
    message = (f"Wasserstein bound {report.bound_wass / q_plus:.4f} q+, "
               f"TV bound {report.bound_tv / q_plus:.4f} q+")
    return ExperimentResult('normal-bounds', table, wass_ok and tv_ok, message)


def bound_curves(qbar=(2.0,), eps_max: float = 2.0, step: float = 0.01) -> ExperimentResult:
    """Samples of g, G and G* on a radius grid."""
    qbar = np.atleast_1d(np.asarray(qbar, dtype=float))
    eps_values = np.round(np.arange(0.0, eps_max + 0.5 * step, step), 12)
    table = bound_sweep(qbar, eps_values)
    qinf = float(np.max(qbar))
    eps_bar = switch_point(qbar)
    continuous = abs(bound_G(qbar, eps_bar) - bound_G(qbar, eps_bar * (1 + 1e-12))) <= 1e-9 * max(1.0, qinf)
    nonnegative = bool(np.all(table['G_star'] >= -1e-12))
    monotone = bool(np.all(np.diff(table['G']) >= -1e-12))
    checks = [continuous, nonnegative, monotone]
    if qbar.size == 1:
        checks.append(abs(bound_g(qinf, 0.5) - qinf) <= 1e-12)
        checks.append(abs(bound_G_star(qbar, eps_max + 1.0) - 0.5 * qinf) <= 1e-12)
    message = f"continuous at eps_bar={eps_bar:.4g}: {continuous}; G* >= 0: {nonnegative}; G nondecreasing: {monotone}"
    return ExperimentResult('bound-curves', table, all(checks), message)


def dyadic(ns=tuple(range(1, 9)), q_plus: float = 1.0) -> ExperimentResult:
    """Oscillating densities: Wasserstein bound shrinks while the TV bound grows."""
    reports = dyadic_family(list(ns), q_plus)
    table = reports_frame(reports)
    table.insert(1, 'n', list(ns))
    distances = table['W1'].to_numpy()
    tv = table['bound_tv'].to_numpy()
    shrinking = bool(np.all(np.diff(distances) < 0))
    growing = bool(np.all(np.diff(tv) > 0))
    crossed = table['bound_wass'].iloc[-1] < table['bound_tv'].iloc[-1]
    message = (f"W1 decreasing: {shrinking}; TV bound increasing: {growing}; "
               f"Wasserstein bound below TV bound at n={ns[-1]}: {crossed}")
    return ExperimentResult('dyadic-family', table, shrinking and growing and bool(crossed), message)


EXPERIMENTS: Dict[str, Callable[..., ExperimentResult]] = {
    'fig-convexity': fig_convexity,
    'tightness': tightness,
    'normal-bounds': normal_bounds,
    'bound-curves': bound_curves,
    'dyadic-family': dyadic,
}


def available() -> List[str]:
    return sorted(EXPERIMENTS)


def run_experiment(name: str, **kwargs) -> ExperimentResult:
    if name not in EXPERIMENTS:
        raise ValueError(f"Unknown experiment {name!r}; available: {', '.join(available())}")
    return EXPERIMENTS[name](**kwargs)
