"""
Pragmatic moment-based DRSIR.

Moment conditions E[g(xi_i)] = M on a law in the smoothed class are the same
as E[g_hat(xi_i)] = M on the pre-image law, where g_hat is the unit moving
average of g. The worst case of E[v_hat] is then a semi-infinite LP in the
multipliers, solved here by cutting planes.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from config.config import get_config
from numerics import (ConvergenceError, LinearProgram, NumericalError,
                      PiecewisePolynomial, UnboundedProblemError, lp_solve)
from sir_core import (CostVector, FirstStageProblem, FirstStageResult,
                      as_tender_point, check_bounded_below, recourse_piecewise,
                      value_hat_1d)

KINDS = ('power', 'mad', 'poly', 'piecewise')


class InfeasibleMomentsError(ValueError):
    """No law on the support matches the requested moments"""


# =======================
# Moment functions
# =======================
@dataclass
class MomentFunctionSpec:
    """One marginal moment condition E[g(xi_i)] = target."""

    kind: str
    target: float
    degree: int = 1
    center: float = 0.0
    coefficients: Optional[Sequence[float]] = None
    function: Optional[PiecewisePolynomial] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown moment kind {self.kind!r}; expected one of {KINDS}")
        self.target = float(self.target)
        if not np.isfinite(self.target):
            raise ValueError("Moment target must be finite")
        if self.kind == 'power' and self.degree < 1:
            raise ValueError("Power moments need degree >= 1")
        if self.kind == 'poly':
            if not self.coefficients:
                raise ValueError("A polynomial moment needs coefficients")
            if len(self.coefficients) > 4:
                raise ValueError("Polynomial moment functions are limited to degree 3")
        if self.kind == 'piecewise':
            if self.function is None:
                raise ValueError("A piecewise moment needs a PiecewisePolynomial")
            if self.function.degree > 3:
                raise ValueError("Piecewise moment functions are limited to degree 3")

    @classmethod
    def mean(cls, target):
        return cls('power', target, degree=1)

    @classmethod
    def power(cls, degree, target):
        return cls('power', target, degree=int(degree))

    @classmethod
    def mad(cls, center, target):
        return cls('mad', target, center=float(center))

    @classmethod
    def poly(cls, coefficients, target):
        return cls('poly', target, coefficients=[float(c) for c in coefficients])

    @classmethod
    def piecewise(cls, function: PiecewisePolynomial, target):
        return cls('piecewise', target, function=function)

    @property
    def centers(self) -> List[float]:
        """Points where g_hat changes shape; useful as initial cut points."""
        if self.kind == 'mad':
            return [self.center - 0.5, self.center, self.center + 0.5]
        if self.kind == 'piecewise':
            return list(self.function.finite_breakpoints())
        return [0.0]

    def _polynomial(self) -> Polynomial:
        if self.kind == 'power':
            return Polynomial([0.0] * self.degree + [1.0])
        return Polynomial(self.coefficients)

    def g(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == 'mad':
            return np.abs(s - self.center)
        if self.kind == 'piecewise':
            return self.function(s)
        return self._polynomial()(s)

    def g_hat_function(self, lo: float = -math.inf, hi: float = math.inf) -> PiecewisePolynomial:
        """g_hat as a piecewise polynomial, exact at least on [lo, hi]."""
        if self.kind in ('power', 'poly'):
            anti = self._polynomial().integ()
            smoothed = anti(Polynomial([0.5, 1.0])) - anti(Polynomial([-0.5, 1.0]))
            return PiecewisePolynomial([-math.inf, math.inf], [smoothed.coef])
        if self.kind == 'mad':
            mu = self.center
            return PiecewisePolynomial([-math.inf, mu - 0.5, mu + 0.5, math.inf],
                                       [[0.5, -1.0], [0.5, -1.0, 1.0], [0.5, 1.0]])
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("Piecewise moment functions need a bounded window")
        window = PiecewisePolynomial.constant(1.0, lo - 0.5, hi + 0.5)
        return (self.function * window).moving_average()

    def g_hat(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == 'piecewise':
            finite = s[np.isfinite(s)] if s.ndim else s
            lo, hi = (float(np.min(finite)), float(np.max(finite))) if np.size(finite) else (0.0, 0.0)
            return self.g_hat_function(lo, hi)(s)
        return self.g_hat_function()(s)


def g_hat(spec: MomentFunctionSpec, s):
    """Integral of g over [s - 1/2, s + 1/2]."""
    return spec.g_hat(s)


@dataclass
class MomentAmbiguitySet:
    """Marginal moment conditions and a bounded support per dimension.

    A degenerate support L == U is accepted; it pins the marginal to a point.
    """

    specs: List[List[MomentFunctionSpec]]
    supports: List[Tuple[float, float]]

    def __post_init__(self):
        if len(self.specs) != len(self.supports):
            raise ValueError("Every dimension needs a support interval")
        cleaned = []
        for i, (lo, hi) in enumerate(self.supports):
            lo, hi = float(lo), float(hi)
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError(f"Dimension {i}: support must be bounded")
            if lo > hi:
                raise ValueError(f"Dimension {i}: support lower bound {lo} exceeds upper bound {hi}")
            cleaned.append((lo, hi))
        self.supports = cleaned

    @property
    def m(self) -> int:
        return len(self.supports)


@dataclass
class GridPrimalResult:
    value: float
    points: np.ndarray
    weights: np.ndarray

    @property
    def active_points(self) -> np.ndarray:
        return self.points[self.weights > 1e-12]


@dataclass
class DimensionDual:
    nu: np.ndarray
    pi: float
    objective: float
    iterations: int
    max_violation: float
    points: List[float] = field(default_factory=list)


@dataclass
class MomentResult:
    value: float
    duals: List[DimensionDual]
    primal_value: float
    duality_gap: float
    history: List[dict] = field(default_factory=list)

    def __iter__(self):
        yield self.value
        yield self.duals


# =======================
# Grid primal
# =======================
def _primal_grid(specs, lo, hi, x_i, step):
    extra = [lo, hi, x_i - 0.5, x_i + 0.5] + [c for spec in specs for c in spec.centers]
    grid = np.concatenate([np.arange(lo, hi, step), extra])
    grid = grid[(grid >= lo) & (grid <= hi)]
    return np.unique(grid)


def moment_grid_primal(qp, qm, specs: Sequence[MomentFunctionSpec], support, x_i, step=None):
    """max sum w_j v_hat(s_j) over weights on a grid of the support matching every moment."""
    step = get_config().solver.MOMENT_PRIMAL_GRID_STEP if step is None else step
    lo, hi = support
    grid = _primal_grid(specs, lo, hi, x_i, step)
    rows = [np.ones(grid.size)] + [spec.g_hat_function(lo, hi)(grid) for spec in specs]
    rhs = [1.0] + [spec.target for spec in specs]
    lp = LinearProgram(value_hat_1d(qp, qm, grid - x_i), np.vstack(rows),
                       ['='] * len(rows), np.array(rhs), maximize=True)
    result = lp_solve(lp)
    if result.status == 'infeasible':
        raise InfeasibleMomentsError(f"No law on [{lo}, {hi}] matches the moment targets "
                                     f"{[spec.target for spec in specs]}")
    if not result.optimal:
        raise NumericalError(f"Grid primal LP ended with status {result.status}")
    return GridPrimalResult(float(result.objective), grid, np.asarray(result.x))


# =======================
# Separation
# =======================
def _combined(specs, nu, pi, lo, hi) -> PiecewisePolynomial:
    total = PiecewisePolynomial.constant(pi)
    for spec, weight in zip(specs, nu):
        total = total + spec.g_hat_function(lo, hi) * weight
    return total


def _maximise_on(h: PiecewisePolynomial, lo, hi, fallback_step):
    """Maximum of a continuous piecewise polynomial over [lo, hi]."""
    if lo == hi:
        return float(h(lo)), lo
    root_tol = get_config().numerics.ROOT_TOL
    breaks = h.finite_breakpoints()
    candidates = [np.array([lo, hi]), breaks[(breaks > lo) & (breaks < hi)]]
    edges = np.concatenate([[lo], breaks[(breaks > lo) & (breaks < hi)], [hi]])
    for a, b in zip(edges[:-1], edges[1:]):
        j = int(h.segment_index(0.5 * (a + b)))
        origin = h.origins[j]
        slope = h.segment_polynomial(j).deriv()
        if slope.degree() <= 0:
            continue
        try:
            roots = slope.roots()
        except np.linalg.LinAlgError:
            candidates.append(np.arange(a, b, fallback_step))
            continue
        real = roots[np.abs(np.imag(roots)) <= root_tol].real + origin
        candidates.append(real[(real > a) & (real < b)])
    points = np.concatenate(candidates)
    values = h(points)
    k = int(np.argmax(values))
    return float(values[k]), float(points[k])


def separate_moment(qp, qm, specs, support, x_i, nu, pi):
    """max over s in the support of v_hat(s - x) - sum nu_k g_hat_k(s) - pi."""
    lo, hi = support
    fallback = get_config().solver.MOMENT_FALLBACK_STEP
    h = recourse_piecewise(qp, qm, x_i, lo, hi, 'hat') - _combined(specs, nu, pi, lo, hi)
    return _maximise_on(h, lo, hi, fallback)


# =======================
# Per-dimension dual
# =======================
def _initial_points(specs, support, x_i, seeds=()):
    cfg = get_config().solver
    lo, hi = support
    pts = [lo, hi, x_i - 0.5, x_i + 0.5] + [c for spec in specs for c in spec.centers]
    pts.extend(np.linspace(lo, hi, cfg.MOMENT_INITIAL_GRID))
    pts.extend(seeds)
    pts = np.asarray(pts, dtype=float)
    return sorted(set(float(p) for p in pts[(pts >= lo) & (pts <= hi)]))


def _dimension_dual(qp, qm, specs, support, x_i, tol, seeds):
    cfg = get_config().solver
    lo, hi = support
    targets = np.array([spec.target for spec in specs])
    n = len(specs) + 1
    objective = np.concatenate([targets, [1.0]])
    points = _initial_points(specs, support, x_i, seeds)
    g_hats = [spec.g_hat_function(lo, hi) for spec in specs]
    unbounded = np.full(n, np.inf)

    for iteration in range(cfg.MOMENT_MAX_ITERATIONS):
        s = np.asarray(points)
        A = np.column_stack([g(s) for g in g_hats] + [np.ones(s.size)])
        lp = LinearProgram(objective, A, ['>='] * s.size, value_hat_1d(qp, qm, s - x_i),
                           lower=-unbounded, upper=unbounded)
        result = lp_solve(lp)
        if result.status == 'unbounded':
            raise UnboundedProblemError("Moment dual master is unbounded; the support is too loose "
                                        "for the moment targets")
        if not result.optimal:
            raise NumericalError(f"Moment master LP ended with status {result.status}")
        nu, pi = result.x[:-1], float(result.x[-1])
        violation, s_new = separate_moment(qp, qm, specs, support, x_i, nu, pi)
        if cfg.VERBOSE:
            print(f"  iter {iteration}: dual={result.objective:.10g} violation={violation:.3g}")
        if violation <= tol:
            return DimensionDual(nu, pi, float(result.objective), iteration + 1, violation, points)
        points.append(s_new)
    raise ConvergenceError(f"Moment cutting planes stopped after {cfg.MOMENT_MAX_ITERATIONS} iterations",
                           gap=violation)


def pragmatic_moment_drsir(q: CostVector, U: MomentAmbiguitySet, x, tol=None) -> MomentResult:
    """sup of E[v_hat(xi, x)] over the smoothed laws matching the marginal moments."""
    tol = get_config().solver.MOMENT_TOL if tol is None else tol
    if U.m != q.m:
        raise ValueError(f"Moment set has {U.m} dimensions, costs have {q.m}")
    x = as_tender_point(x, q.m)

    duals, primal_total, history = [], 0.0, []
    for i, ((qp, qm), specs, support) in enumerate(zip(q.pairs(), U.specs, U.supports)):
        primal = moment_grid_primal(qp, qm, specs, support, x[i])
        dual = _dimension_dual(qp, qm, specs, support, x[i], tol, primal.active_points)
        duals.append(dual)
        primal_total += primal.value
        history.append({'dimension': i, 'dual': dual.objective, 'primal': primal.value,
                        'iterations': dual.iterations, 'max_violation': dual.max_violation})

    value = float(sum(d.objective for d in duals))
    gap = value - primal_total
    return MomentResult(value, duals, primal_total, gap, history)


# =======================
# Joint first stage
# =======================
def solve_first_stage_moment(prob: FirstStageProblem, q: CostVector, U: MomentAmbiguitySet,
                             tol=None) -> FirstStageResult:
    """min c^T x + sum_i (M_i . nu_i + pi_i) with cuts linear in (x, nu, pi)."""
    cfg = get_config().solver
    tol = cfg.MOMENT_TOL if tol is None else tol
    if prob.m != q.m or U.m != q.m:
        raise ValueError("First-stage problem, costs and moment set disagree in dimension")
    m = q.m

    # Column layout: x_0..x_{m-1}, then per dimension nu_i (K_i entries) and pi_i
    starts, column = [], m
    for specs in U.specs:
        starts.append(column)
        column += len(specs) + 1
    n = column

    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    objective = np.zeros(n)
    objective[:m] = prob.c
    for i, (specs, support) in enumerate(zip(U.specs, U.supports)):
        qp, qm = q.pair(i)
        check_bounded_below(prob.c[i], qp, qm, prob.lower[i], prob.upper[i], i)
        pad = cfg.FIRST_STAGE_WINDOW
        lower[i] = prob.lower[i] if np.isfinite(prob.lower[i]) else support[0] - pad
        upper[i] = prob.upper[i] if np.isfinite(prob.upper[i]) else support[1] + pad
        objective[starts[i]:starts[i] + len(specs)] = [spec.target for spec in specs]
        objective[starts[i] + len(specs)] = 1.0

    g_hats = [[spec.g_hat_function(*support) for spec in specs]
              for specs, support in zip(U.specs, U.supports)]
    rows, rhs = [], []

    def add_cuts(i, s):
        qp, qm = q.pair(i)
        alpha = (0.5 * qm, 0.5 * (qp + qm), 0.5 * qp)
        slopes = (-qm, qp - qm, qp)
        base = np.zeros(n)
        k = len(g_hats[i])
        base[starts[i]:starts[i] + k] = [g(s) for g in g_hats[i]]
        base[starts[i] + k] = 1.0
        for a_j, b_j in zip(alpha, slopes):
            row = base.copy()
            row[i] = b_j
            rows.append(row)
            rhs.append(a_j + b_j * s)

    for i, (specs, support) in enumerate(zip(U.specs, U.supports)):
        qp, qm = q.pair(i)
        mid = 0.5 * (lower[i] + upper[i])
        seeds = moment_grid_primal(qp, qm, specs, support, mid).active_points
        for s in _initial_points(specs, support, mid, seeds):
            add_cuts(i, s)

    history = []
    for iteration in range(cfg.MOMENT_MAX_ITERATIONS):
        lp = LinearProgram(objective, np.array(rows), ['>='] * len(rows), np.array(rhs), lower, upper)
        result = lp_solve(lp)
        if result.status == 'unbounded':
            raise UnboundedProblemError("Joint moment master is unbounded")
        if not result.optimal:
            raise NumericalError(f"Joint moment master ended with status {result.status}")
        x = result.x[:m]
        worst, upper_bound = 0.0, float(result.objective)
        for i, (specs, support) in enumerate(zip(U.specs, U.supports)):
            qp, qm = q.pair(i)
            k = len(specs)
            nu = result.x[starts[i]:starts[i] + k]
            pi = float(result.x[starts[i] + k])
            violation, s_new = separate_moment(qp, qm, specs, support, x[i], nu, pi)
            if violation > 0:
                upper_bound += violation
            worst = max(worst, violation)
            if violation > tol:
                add_cuts(i, s_new)
        history.append({'iteration': iteration, 'lower_bound': float(result.objective),
                        'upper_bound': upper_bound, 'max_violation': worst, 'cuts': len(rows)})
        if cfg.VERBOSE:
            print(f"  iter {iteration}: LB={result.objective:.10g} UB={upper_bound:.10g} viol={worst:.3g}")
        if worst <= tol:
            return FirstStageResult(np.asarray(x), upper_bound, 'moment', None, history)
    raise ConvergenceError(f"Joint moment cutting planes stopped after {cfg.MOMENT_MAX_ITERATIONS} "
                           f"iterations", gap=history[-1]['upper_bound'] - history[-1]['lower_bound'])
