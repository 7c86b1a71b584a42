"""
Shared numerical kernels: piecewise polynomials, a dense revised simplex and
golden-section search for convex functions of one variable.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.linalg import lu_factor, lu_solve

from config.config import get_config


class NumericalError(RuntimeError):
    """Base class for numerical failures"""


class SingularBasisError(NumericalError):
    """Raised when the simplex basis matrix is numerically singular"""


class ConvergenceError(NumericalError):
    """Raised when an iterative method hits its iteration cap"""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class UnboundedProblemError(NumericalError):
    """Raised when an optimization problem has no finite optimum"""


# =======================
# Piecewise polynomials
# =======================
def _as_polynomial(coefs) -> Polynomial:
    if isinstance(coefs, Polynomial):
        return coefs
    arr = np.atleast_1d(np.asarray(coefs, dtype=float))
    if arr.size == 0:
        arr = np.zeros(1)
    return Polynomial(arr)


def merge_breakpoints(*arrays, tol=None) -> np.ndarray:
    """Union of breakpoint arrays with near-duplicates collapsed."""
    if tol is None:
        tol = get_config().numerics.BREAKPOINT_TOL
    merged = np.unique(np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays]))
    if merged.size <= 1:
        return merged
    keep = [merged[0]]
    for value in merged[1:]:
        if np.isfinite(value) and np.isfinite(keep[-1]) and value - keep[-1] <= tol * max(1.0, abs(value)):
            continue
        keep.append(value)
    return np.asarray(keep)


class PiecewisePolynomial:
    """Piecewise polynomial on the whole real line.

    Segment j covers [breakpoints[j], breakpoints[j+1]) and stores its
    polynomial in the local coordinate t - origin_j, where the origin is the
    left breakpoint when finite, else the right one, else zero. The outermost
    breakpoints are always -inf and +inf; finite outer ends passed to the
    constructor are padded with zero segments.
    """

    def __init__(self, breakpoints: Sequence[float], coefficients: Sequence):
        breaks = [float(b) for b in breakpoints]
        polys = [_as_polynomial(c) for c in coefficients]
        if len(breaks) != len(polys) + 1:
            raise ValueError(f"Expected {len(breaks) - 1} segments, got {len(polys)}")
        if len(breaks) < 2:
            breaks, polys = [-math.inf, math.inf], [Polynomial([0.0])]
        if breaks[0] > -math.inf:
            breaks.insert(0, -math.inf)
            polys.insert(0, Polynomial([0.0]))
        if breaks[-1] < math.inf:
            breaks.append(math.inf)
            polys.append(Polynomial([0.0]))

        self._breaks = np.asarray(breaks, dtype=float)
        if np.any(np.isnan(self._breaks)) or not np.all(np.diff(self._breaks) > 0):
            raise ValueError("Breakpoints must be strictly increasing")

        width = max(len(p.coef) for p in polys)
        coef = np.zeros((len(polys), width))
        for j, p in enumerate(polys):
            coef[j, :len(p.coef)] = p.coef
        # Drop all-zero high-order columns
        nonzero = np.flatnonzero(np.any(coef != 0.0, axis=0))
        last = nonzero[-1] + 1 if nonzero.size else 1
        self._coef = coef[:, :last]

        left, right = self._breaks[:-1], self._breaks[1:]
        self._origins = np.where(np.isfinite(left), left, np.where(np.isfinite(right), right, 0.0))

    # ---------- construction helpers ----------
    @classmethod
    def zero(cls):
        return cls([-math.inf, math.inf], [[0.0]])

    @classmethod
    def constant(cls, value, lo=-math.inf, hi=math.inf):
        return cls([lo, hi], [[float(value)]])

    @classmethod
    def step_sum(cls, lefts, rights, heights):
        """Sum of boxes heights[k] on [lefts[k], rights[k])."""
        lefts = np.asarray(lefts, dtype=float)
        rights = np.asarray(rights, dtype=float)
        heights = np.asarray(heights, dtype=float)
        if lefts.size == 0:
            return cls.zero()
        if np.any(rights <= lefts):
            raise ValueError("Each box needs left < right")
        edges = np.unique(np.concatenate([lefts, rights]))
        events = np.zeros(edges.size)
        np.add.at(events, np.searchsorted(edges, lefts), heights)
        np.add.at(events, np.searchsorted(edges, rights), -heights)
        levels = np.cumsum(events)[:-1]
        return cls(edges, [[v] for v in levels])

    # ---------- basic accessors ----------
    @property
    def breakpoints(self) -> np.ndarray:
        return self._breaks.copy()

    @property
    def coefficients(self) -> np.ndarray:
        return self._coef.copy()

    @property
    def origins(self) -> np.ndarray:
        return self._origins.copy()

    @property
    def n_segments(self) -> int:
        return self._coef.shape[0]

    @property
    def degree(self) -> int:
        nonzero = np.flatnonzero(np.any(self._coef != 0.0, axis=0))
        return int(nonzero[-1]) if nonzero.size else 0

    def segment_polynomial(self, j: int) -> Polynomial:
        return Polynomial(self._coef[j].copy())

    def polynomials(self) -> List[Polynomial]:
        return [self.segment_polynomial(j) for j in range(self.n_segments)]

    def is_zero_segment(self, j: int) -> bool:
        return not np.any(self._coef[j] != 0.0)

    def finite_breakpoints(self) -> np.ndarray:
        return self._breaks[1:-1].copy()

    def support(self) -> Tuple[float, float]:
        """Smallest interval outside of which the function vanishes."""
        active = [j for j in range(self.n_segments) if not self.is_zero_segment(j)]
        if not active:
            return (0.0, 0.0)
        return (float(self._breaks[active[0]]), float(self._breaks[active[-1] + 1]))

    # ---------- evaluation ----------
    def segment_index(self, t):
        idx = np.searchsorted(self._breaks, t, side='right') - 1
        return np.clip(idx, 0, self.n_segments - 1)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        idx = self.segment_index(t_arr)
        local = np.where(np.isfinite(t_arr), t_arr - self._origins[idx], 0.0)
        coef = self._coef[idx]
        result = coef[..., -1].copy()
        for k in range(self._coef.shape[1] - 2, -1, -1):
            result = result * local + coef[..., k]
        if np.ndim(t) == 0:
            return float(result)
        return result

    def left_limit(self, t: float) -> float:
        """Value approached from the left of t."""
        idx = int(np.searchsorted(self._breaks, t, side='left') - 1)
        idx = min(max(idx, 0), self.n_segments - 1)
        return float(self.segment_polynomial(idx)(t - self._origins[idx]))

    # ---------- restructuring ----------
    def _on(self, breaks: np.ndarray) -> "PiecewisePolynomial":
        """Re-express on a breakpoint superset."""
        polys = []
        for a, b in zip(breaks[:-1], breaks[1:]):
            if np.isfinite(a) and np.isfinite(b):
                probe = 0.5 * (a + b)
            elif np.isfinite(a):
                probe = a + 1.0
            elif np.isfinite(b):
                probe = b - 1.0
            else:
                probe = 0.0
            j = int(self.segment_index(probe))
            origin = a if np.isfinite(a) else (b if np.isfinite(b) else 0.0)
            shift = origin - self._origins[j]
            poly = self.segment_polynomial(j)
            if shift != 0.0 and poly.degree() > 0:
                poly = poly(Polynomial([shift, 1.0]))
            polys.append(poly)
        return PiecewisePolynomial(breaks, polys)

    def refine(self, points) -> "PiecewisePolynomial":
        """Insert extra breakpoints without changing the function."""
        pts = np.asarray(points, dtype=float).ravel()
        pts = pts[np.isfinite(pts)]
        return self._on(merge_breakpoints(self._breaks, pts))

    def shifted(self, h: float) -> "PiecewisePolynomial":
        """The function t -> f(t - h)."""
        if self.n_segments == 1:
            poly = self.segment_polynomial(0)
            return PiecewisePolynomial(self._breaks, [poly(Polynomial([-h, 1.0]))])
        return PiecewisePolynomial(self._breaks + h, self.polynomials())

    def _binary(self, other, op):
        breaks = merge_breakpoints(self._breaks, other._breaks)
        left, right = self._on(breaks), other._on(breaks)
        polys = [op(p, r) for p, r in zip(left.polynomials(), right.polynomials())]
        return PiecewisePolynomial(breaks, polys)

    def __add__(self, other):
        if isinstance(other, PiecewisePolynomial):
            return self._binary(other, lambda a, b: a + b)
        return PiecewisePolynomial(self._breaks, [p + float(other) for p in self.polynomials()])

    __radd__ = __add__

    def __neg__(self):
        return PiecewisePolynomial(self._breaks, -self._coef)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PiecewisePolynomial):
            return self._binary(other, lambda a, b: a * b)
        return PiecewisePolynomial(self._breaks, self._coef * float(other))

    __rmul__ = __mul__

    # ---------- calculus ----------
    def _piece_bounds(self, j, a, b):
        lo = max(a, self._breaks[j])
        hi = min(b, self._breaks[j + 1])
        return lo, hi

    def integrate(self, a: float = -math.inf, b: float = math.inf) -> float:
        """Exact integral over [a, b]."""
        if a > b:
            raise ValueError(f"Integration bounds reversed: {a} > {b}")
        total = 0.0
        for j in range(self.n_segments):
            lo, hi = self._piece_bounds(j, a, b)
            if lo >= hi or self.is_zero_segment(j):
                continue
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise NumericalError("Unbounded integral over an infinite segment")
            anti = self.segment_polynomial(j).integ()
            o = self._origins[j]
            total += anti(hi - o) - anti(lo - o)
        return float(total)

    def antiderivative(self) -> "PiecewisePolynomial":
        """Antiderivative vanishing at -inf."""
        if not self.is_zero_segment(0):
            raise NumericalError("Antiderivative diverges on the left tail")
        polys = [Polynomial([0.0])]
        level = 0.0
        for j in range(1, self.n_segments):
            anti = self.segment_polynomial(j).integ()
            polys.append(anti + level)
            width = self._breaks[j + 1] - self._breaks[j]
            if np.isfinite(width):
                level += anti(width)
        return PiecewisePolynomial(self._breaks, polys)

    def derivative(self) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self._breaks, [p.deriv() for p in self.polynomials()])

    def moving_average(self, width: float = 1.0) -> "PiecewisePolynomial":
        """t -> (1/width) * integral of f over [t - width/2, t + width/2]."""
        anti = self.antiderivative()
        half = 0.5 * width
        return (anti.shifted(-half) - anti.shifted(half)) * (1.0 / width)

    def jumps(self) -> Tuple[np.ndarray, np.ndarray]:
        """Locations and sizes (right minus left value) of the discontinuities."""
        locations, sizes = [], []
        for j in range(1, self.n_segments):
            b = self._breaks[j]
            left = self.segment_polynomial(j - 1)(b - self._origins[j - 1])
            right = self.segment_polynomial(j)(b - self._origins[j])
            locations.append(b)
            sizes.append(right - left)
        return np.asarray(locations), np.asarray(sizes)

    def integrate_abs(self, a: float = -math.inf, b: float = math.inf) -> float:
        """Exact integral of |f| over [a, b], splitting at real roots."""
        if a > b:
            raise ValueError(f"Integration bounds reversed: {a} > {b}")
        root_tol = get_config().numerics.ROOT_TOL
        total = 0.0
        for j in range(self.n_segments):
            lo, hi = self._piece_bounds(j, a, b)
            if lo >= hi or self.is_zero_segment(j):
                continue
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise NumericalError("Unbounded integral over an infinite segment")
            poly = self.segment_polynomial(j)
            o = self._origins[j]
            cuts = [lo - o, hi - o]
            if poly.degree() > 0:
                roots = poly.roots()
                real = roots[np.abs(np.imag(roots)) <= root_tol].real
                cuts.extend(r for r in real if lo - o < r < hi - o)
            cuts = np.sort(np.asarray(cuts))
            anti = poly.integ()
            values = anti(cuts)
            total += float(np.sum(np.abs(np.diff(values))))
        return total

    def total_variation(self) -> float:
        """Sum of absolute jumps plus the integral of |f'|."""
        _, sizes = self.jumps()
        return float(np.sum(np.abs(sizes))) + self.derivative().integrate_abs()

    def __repr__(self):
        return f"PiecewisePolynomial(segments={self.n_segments}, degree={self.degree})"


def poly_integrate(f: PiecewisePolynomial, a: float, b: float) -> float:
    """Integral of a piecewise polynomial over [a, b]."""
    return f.integrate(a, b)


# =======================
# Convex 1-D minimization
# =======================
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def minimize_convex_1d(f: Callable[[float], float], lo: float, hi: float,
                       tol: Optional[float] = None, max_iterations: Optional[int] = None):
    """Golden-section search; returns (x*, f(x*)) with ties broken toward smaller x."""
    cfg = get_config().numerics
    tol = cfg.GOLDEN_TOL if tol is None else tol
    max_iterations = cfg.GOLDEN_MAX_ITERATIONS if max_iterations is None else max_iterations
    if lo > hi:
        raise ValueError(f"Empty search interval [{lo}, {hi}]")
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("Golden-section search needs a finite interval")

    evaluated = {}

    def fx(x):
        if x not in evaluated:
            evaluated[x] = float(f(x))
        return evaluated[x]

    a, b = float(lo), float(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    iteration = 0
    while b - a > tol and iteration < max_iterations:
        if fx(c) <= fx(d):
            b, d = d, c
            c = b - _INV_PHI * (b - a)
        else:
            a, c = c, d
            d = a + _INV_PHI * (b - a)
        iteration += 1

    for x in (lo, hi, a, b, 0.5 * (a + b)):
        fx(x)
    best = min(evaluated.items(), key=lambda item: (item[1], item[0]))
    return best[0], best[1]


# =======================
# Linear programming
# =======================
_SENSES = {'<=', '=', '>='}


@dataclass
class LinearProgram:
    """min/max c^T x s.t. A x (<=,=,>=) b, lower <= x <= upper"""

    c: np.ndarray
    A: np.ndarray
    senses: List[str]
    b: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if n else np.zeros((0, 0))
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = [s.strip() for s in self.senses]
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()

        if self.A.shape[0] != self.b.size or len(self.senses) != self.b.size:
            raise ValueError("Constraint matrix, senses and right-hand side disagree in size")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("Bounds must match the number of variables")
        if any(s not in _SENSES for s in self.senses):
            raise ValueError(f"Constraint senses must be one of {sorted(_SENSES)}")
        if np.any(self.lower > self.upper):
            raise ValueError("Lower bound exceeds upper bound")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP data must be finite")

    @property
    def n_variables(self) -> int:
        return self.c.size

    @property
    def n_constraints(self) -> int:
        return self.b.size


@dataclass
class LPResult:
    status: str
    x: Optional[np.ndarray]
    objective: float
    duals: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == 'optimal'

    def __iter__(self):
        yield self.status
        yield self.x
        yield self.objective


class RevisedSimplex:
    """Dense revised simplex over {A y = b, y >= 0} with b >= 0."""

    def __init__(self, tol=None, max_iterations=None, bland_after=None, pivot_tol=None):
        cfg = get_config().numerics
        self.tol = cfg.LP_TOLERANCE if tol is None else tol
        self.max_iterations = cfg.LP_MAX_ITERATIONS if max_iterations is None else max_iterations
        self.bland_after = cfg.BLAND_AFTER_DEGENERATE if bland_after is None else bland_after
        self.pivot_tol = cfg.SINGULAR_PIVOT_TOL if pivot_tol is None else pivot_tol
        self.iterations = 0

    def factor(self, B):
        lu, piv = lu_factor(B, check_finite=False)
        diag = np.abs(np.diag(lu))
        if diag.size and diag.min() <= self.pivot_tol * max(1.0, diag.max()):
            raise SingularBasisError("Basis matrix is numerically singular")
        return lu, piv

    def run(self, A, b, cost, basis, allowed):
        """Iterate from a feasible basis; returns (status, basis, xB, y)."""
        bland = False
        degenerate = 0
        for _ in range(self.max_iterations):
            factors = self.factor(A[:, basis])
            xB = lu_solve(factors, b, check_finite=False)
            y = lu_solve(factors, cost[basis], trans=1, check_finite=False)
            reduced = cost - A.T @ y
            reduced[basis] = 0.0
            reduced[~allowed] = 0.0
            candidates = np.flatnonzero(reduced < -self.tol)
            if candidates.size == 0:
                return 'optimal', basis, xB, y
            if bland:
                entering = candidates[0]
            else:
                entering = candidates[np.argmin(reduced[candidates])]

            direction = lu_solve(factors, A[:, entering], check_finite=False)
            positive = direction > self.tol
            if not np.any(positive):
                return 'unbounded', basis, xB, y
            ratios = np.full(direction.size, np.inf)
            ratios[positive] = np.maximum(xB[positive], 0.0) / direction[positive]
            theta = ratios.min()
            ties = np.flatnonzero(ratios <= theta + self.tol)
            if bland:
                leaving = ties[np.argmin(basis[ties])]
            else:
                leaving = ties[np.argmax(direction[ties])]

            degenerate = degenerate + 1 if theta <= self.tol else 0
            if degenerate >= self.bland_after:
                bland = True
            basis[leaving] = entering
            self.iterations += 1
        raise ConvergenceError(f"Simplex did not converge in {self.max_iterations} iterations")


def _standard_form(lp: LinearProgram):
    """Map x = offset + M y with y >= 0 and collect upper-bound rows."""
    n = lp.n_variables
    offset = np.zeros(n)
    columns = []
    upper_rows = []
    for j in range(n):
        lo, up = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            columns.append((j, 1.0))
            if np.isfinite(up):
                upper_rows.append((len(columns) - 1, up - lo))
        elif np.isfinite(up):
            offset[j] = up
            columns.append((j, -1.0))
        else:
            columns.append((j, 1.0))
            columns.append((j, -1.0))
    M = np.zeros((n, len(columns)))
    for k, (j, sign) in enumerate(columns):
        M[j, k] = sign
    return offset, M, upper_rows


def lp_solve(lp: LinearProgram, tol: Optional[float] = None,
             max_iterations: Optional[int] = None) -> LPResult:
    """Two-phase dense revised simplex.

    Returns an LPResult which unpacks as (status, x, objective). Duals are the
    sensitivities of the reported objective to the original right-hand sides.
    """
    solver = RevisedSimplex(tol=tol, max_iterations=max_iterations)
    feas_tol = 1e-7

    offset, M, upper_rows = _standard_form(lp)
    n_std = M.shape[1]
    A_std = lp.A @ M
    b_std = lp.b - lp.A @ offset
    c_std = (lp.c @ M) * (-1.0 if lp.maximize else 1.0)
    senses = list(lp.senses)
    n_orig_rows = lp.n_constraints

    if upper_rows:
        extra = np.zeros((len(upper_rows), n_std))
        for r, (k, bound) in enumerate(upper_rows):
            extra[r, k] = 1.0
        A_std = np.vstack([A_std, extra])
        b_std = np.concatenate([b_std, [bound for _, bound in upper_rows]])
        senses += ['<='] * len(upper_rows)

    rows = A_std.shape[0]
    if rows == 0:
        if np.any(c_std < -solver.tol):
            return LPResult('unbounded', None, math.inf if lp.maximize else -math.inf)
        x = offset.copy()
        return LPResult('optimal', x, float(lp.c @ x), np.zeros(0), 0)

    slack_cols = [i for i, s in enumerate(senses) if s != '=']
    S = np.zeros((rows, len(slack_cols)))
    for k, i in enumerate(slack_cols):
        S[i, k] = 1.0 if senses[i] == '<=' else -1.0
    A_full = np.hstack([A_std, S])
    flip = np.where(b_std < 0, -1.0, 1.0)
    A_full = A_full * flip[:, None]
    b_full = b_std * flip
    n_full = A_full.shape[1]

    # Phase one with an artificial per row
    A1 = np.hstack([A_full, np.eye(rows)])
    cost1 = np.concatenate([np.zeros(n_full), np.ones(rows)])
    basis = np.arange(n_full, n_full + rows)
    allowed = np.ones(n_full + rows, dtype=bool)
    _, basis, xB, _ = solver.run(A1, b_full, cost1, basis, allowed)
    infeasibility = float(np.sum(xB[basis >= n_full]))
    if infeasibility > feas_tol * max(1.0, float(np.max(np.abs(b_full)))):
        return LPResult('infeasible', None, math.nan, None, solver.iterations)

    # Drive zero-level artificials out of the basis; rows where that fails are redundant
    keep_rows = np.ones(rows, dtype=bool)
    for pos in range(rows):
        if basis[pos] < n_full:
            continue
        factors = solver.factor(A1[:, basis])
        unit = np.zeros(rows)
        unit[pos] = 1.0
        row = lu_solve(factors, unit, trans=1, check_finite=False) @ A_full
        row[basis[basis < n_full]] = 0.0
        candidates = np.flatnonzero(np.abs(row) > 1e-9)
        if candidates.size:
            basis[pos] = candidates[np.argmax(np.abs(row[candidates]))]
        else:
            keep_rows[basis[pos] - n_full] = False

    redundant_positions = [pos for pos in range(rows) if basis[pos] >= n_full]
    basis = np.delete(basis, redundant_positions)
    A2 = A_full[keep_rows]
    b2 = b_full[keep_rows]
    cost2 = np.concatenate([c_std, np.zeros(n_full - n_std)])
    status, basis, xB, y = solver.run(A2, b2, cost2, basis, np.ones(n_full, dtype=bool))
    if status == 'unbounded':
        return LPResult('unbounded', None, math.inf if lp.maximize else -math.inf,
                        None, solver.iterations)

    y_full = np.zeros(n_full)
    y_full[basis] = np.maximum(xB, 0.0)
    x = offset + M @ y_full[:n_std]

    row_duals = np.zeros(rows)
    row_duals[keep_rows] = y
    row_duals *= flip
    if lp.maximize:
        row_duals = -row_duals
    return LPResult('optimal', x, float(lp.c @ x), row_duals[:n_orig_rows], solver.iterations)
