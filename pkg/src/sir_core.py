"""
Simple integer recourse value functions, their envelopes and convex
approximations, exact expected recourse and first-stage minimization.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.config import get_config
from distributions import Distribution1D, ProductDistribution
from numerics import PiecewisePolynomial, UnboundedProblemError, minimize_convex_1d

VARIANTS = ('exact', 'usc', 'hat', 'lp')


class CostVector:
    """Per-dimension surplus/shortage unit costs (q+, q-)."""

    def __init__(self, pairs: Sequence[Tuple[float, float]]):
        arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
        if arr.shape[0] == 0:
            raise ValueError("A cost vector needs at least one dimension")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("Recourse costs must be finite and nonnegative")
        self._q = arr

    @classmethod
    def single(cls, q_plus: float, q_minus: float):
        return cls([(q_plus, q_minus)])

    @property
    def q_plus(self) -> np.ndarray:
        return self._q[:, 0].copy()

    @property
    def q_minus(self) -> np.ndarray:
        return self._q[:, 1].copy()

    @property
    def m(self) -> int:
        return self._q.shape[0]

    @property
    def qbar(self) -> np.ndarray:
        """max{q_i+, q_i-} per dimension."""
        return self._q.max(axis=1)

    @property
    def qinf(self) -> float:
        return float(self._q.max())

    @property
    def convexity_flags(self) -> np.ndarray:
        """q_i+ + q_i- > 0, needed for the convexity characterisation."""
        return self._q.sum(axis=1) > 0

    def pair(self, i: int) -> Tuple[float, float]:
        return float(self._q[i, 0]), float(self._q[i, 1])

    def pairs(self) -> List[Tuple[float, float]]:
        return [self.pair(i) for i in range(self.m)]

    def __eq__(self, other):
        return isinstance(other, CostVector) and np.array_equal(self._q, other._q)

    def __repr__(self):
        return f"CostVector({self.pairs()})"


@dataclass
class FirstStageProblem:
    """min c^T x + recourse over the box lo <= x <= hi."""

    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), self.c.shape).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), self.c.shape).copy()
        if not np.all(np.isfinite(self.c)):
            raise ValueError("First-stage costs must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("Box lower bound exceeds upper bound")

    @property
    def m(self) -> int:
        return self.c.size

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))


@dataclass
class FirstStageResult:
    x: np.ndarray
    objective: float
    method: str = ''
    certificate: Optional[object] = None
    history: List[dict] = field(default_factory=list)

    def __iter__(self):
        yield self.x
        yield self.objective


def as_tender_point(x, m: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if arr.size != m:
        raise ValueError(f"Tender point has {arr.size} entries, expected {m}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Tender point entries must be finite")
    return arr


def _check_dims(q: CostVector, xi, x):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi.reshape(1)
    x = as_tender_point(x, q.m)
    if xi.shape[-1] != q.m:
        raise ValueError(f"Scenario has {xi.shape[-1]} entries, expected {q.m}")
    return xi, x


# =======================
# One-dimensional kernels in u = xi - x
# =======================
def lattice_offsets(s, x) -> np.ndarray:
    """s - x with values within rounding error of an integer snapped onto it."""
    u = np.asarray(s, dtype=float) - x
    nearest = np.round(u)
    scale = np.maximum(1.0, np.maximum(np.abs(np.asarray(s, dtype=float)), np.abs(x)))
    return np.where(np.abs(u - nearest) <= 1e-12 * scale, nearest, u)


def value_1d(qp, qm, u):
    u = np.asarray(u, dtype=float)
    return qp * np.maximum(np.ceil(u), 0.0) + qm * np.maximum(-np.floor(u), 0.0)


def value_usc_1d(qp, qm, u):
    u = np.asarray(u, dtype=float)
    base = value_1d(qp, qm, u)
    on_lattice = u == np.floor(u)
    right = qp * np.maximum(u + 1.0, 0.0) + qm * np.maximum(-u, 0.0)
    left = qp * np.maximum(u, 0.0) + qm * np.maximum(1.0 - u, 0.0)
    return np.where(on_lattice, np.maximum(base, np.maximum(left, right)), base)


def value_hat_1d(qp, qm, u):
    u = np.asarray(u, dtype=float)
    return qp * np.maximum(u + 0.5, 0.0) + qm * np.maximum(0.5 - u, 0.0)


def value_lp_1d(qp, qm, u):
    u = np.asarray(u, dtype=float)
    return qp * np.maximum(u, 0.0) + qm * np.maximum(-u, 0.0)


_KERNELS = {
    'exact': value_1d,
    'usc': value_usc_1d,
    'hat': value_hat_1d,
    'lp': value_lp_1d,
}


def point_value_1d(qp, qm, u, variant):
    if variant not in _KERNELS:
        raise ValueError(f"Unknown variant {variant!r}; expected one of {VARIANTS}")
    return _KERNELS[variant](qp, qm, u)


def recourse_piecewise(qp, qm, x, lo, hi, variant='exact') -> PiecewisePolynomial:
    """Value function of one dimension as a piecewise polynomial in xi.

    Variants exact and usc agree off the lattice x + Z; they are represented on
    the lattice cells meeting [lo, hi] and are zero outside that window.
    """
    if variant in ('exact', 'usc'):
        k_lo = int(math.floor(lo - x)) - 1
        k_hi = int(math.ceil(hi - x)) + 1
        ks = np.arange(k_lo, k_hi)
        levels = np.where(ks >= 0, qp * (ks + 1.0), qm * (-ks.astype(float)))
        return PiecewisePolynomial(x + np.arange(k_lo, k_hi + 1, dtype=float),
                                   [[level] for level in levels])
    if variant == 'hat':
        return PiecewisePolynomial([-math.inf, x - 0.5, x + 0.5, math.inf],
                                   [[qm, -qm], [qm, qp - qm], [qp, qp]])
    if variant == 'lp':
        return PiecewisePolynomial([-math.inf, x, math.inf], [[0.0, -qm], [0.0, qp]])
    raise ValueError(f"Unknown variant {variant!r}; expected one of {VARIANTS}")


# =======================
# Value functions
# =======================
def value(q: CostVector, xi, x) -> float:
    """sum_i q_i+ ceil(xi_i - x_i)+ + q_i- floor(xi_i - x_i)-"""
    xi, x = _check_dims(q, xi, x)
    return np.sum(value_1d(q.q_plus, q.q_minus, xi - x), axis=-1)


def value_usc(q: CostVector, xi, x) -> float:
    xi, x = _check_dims(q, xi, x)
    return np.sum(value_usc_1d(q.q_plus, q.q_minus, xi - x), axis=-1)


def value_hat(q: CostVector, xi, x) -> float:
    xi, x = _check_dims(q, xi, x)
    return np.sum(value_hat_1d(q.q_plus, q.q_minus, xi - x), axis=-1)


def value_lp(q: CostVector, xi, x) -> float:
    xi, x = _check_dims(q, xi, x)
    return np.sum(value_lp_1d(q.q_plus, q.q_minus, xi - x), axis=-1)


def psi(q: CostVector, xi, x) -> float:
    """Cost of the integer restrictions: value minus its continuous relaxation."""
    return value(q, xi, x) - value_lp(q, xi, x)


# =======================
# Expected recourse
# =======================
def expected_recourse_1d(qp, qm, d: Distribution1D, x: float, variant='exact') -> float:
    point_fn = lambda s: point_value_1d(qp, qm, np.asarray(s) - x, variant)
    if d.is_discrete:
        return float(np.dot(d.masses, point_fn(d.locations)))
    lo, hi = d.support()
    return d.expect(recourse_piecewise(qp, qm, x, lo, hi, variant), at_atoms=point_fn)


def expected_recourse(q: CostVector, P: ProductDistribution, x, variant='exact') -> float:
    """Q(x) = sum_i E[v_i(xi_i, x_i)] for the chosen value-function variant."""
    if variant not in VARIANTS:
        raise ValueError(f"Unknown variant {variant!r}; expected one of {VARIANTS}")
    if P.m != q.m:
        raise ValueError(f"Distribution has {P.m} marginals, costs have {q.m} dimensions")
    x = as_tender_point(x, q.m)
    return float(sum(expected_recourse_1d(qp, qm, d, xi, variant)
                     for (qp, qm), d, xi in zip(q.pairs(), P, x)))


# =======================
# First stage
# =======================
def search_window(d: Distribution1D, lo: float, hi: float, pad=None) -> Tuple[float, float]:
    """Box clipped to the support widened by pad where the box is unbounded."""
    pad = get_config().solver.FIRST_STAGE_WINDOW if pad is None else pad
    s_lo, s_hi = d.support()
    return (lo if np.isfinite(lo) else s_lo - pad,
            hi if np.isfinite(hi) else s_hi + pad)


def check_bounded_below(c_i, qp, qm, lo, hi, dim):
    """The recourse grows like q+ |x| to the left and q- |x| to the right."""
    if not np.isfinite(lo) and c_i - qp > 0:
        raise UnboundedProblemError(f"Dimension {dim}: objective decreases without bound as x -> -inf")
    if not np.isfinite(hi) and c_i + qm < 0:
        raise UnboundedProblemError(f"Dimension {dim}: objective decreases without bound as x -> +inf")


def argmin_smallest(candidates: np.ndarray, values: np.ndarray) -> int:
    """Index of the minimum, ties resolved to the smallest candidate."""
    best = np.min(values)
    slack = 1e-12 * max(1.0, abs(best))
    tied = np.flatnonzero(values <= best + slack)
    return int(tied[np.argmin(candidates[tied])])


def _hat_dimension(c_i, qp, qm, d: Distribution1D, lo, hi):
    window_lo, window_hi = search_window(d, lo, hi)
    objective = lambda t: c_i * t + expected_recourse_1d(qp, qm, d, t, 'hat')
    if d.is_discrete:
        # Piecewise linear with kinks at the atoms +- 1/2
        kinks = np.concatenate([d.locations - 0.5, d.locations + 0.5, [window_lo, window_hi]])
        candidates = np.unique(np.clip(kinks, window_lo, window_hi))
        u = d.locations[None, :] - candidates[:, None]
        values = c_i * candidates + value_hat_1d(qp, qm, u) @ d.masses
        k = argmin_smallest(candidates, values)
        return float(candidates[k]), float(values[k])
    return minimize_convex_1d(objective, window_lo, window_hi)


def _exact_grid_dimension(c_i, qp, qm, d: Distribution1D, lo, hi, step):
    grid = np.arange(lo, hi + 0.5 * step, step)
    grid = grid[grid <= hi]
    extra = [grid, [lo, hi]]
    if d.locations.size:
        # The exact objective jumps where xi - x crosses an integer
        shifts = np.arange(math.floor(lo - d.locations.max()) - 1, math.ceil(hi - d.locations.min()) + 2)
        jumps = (d.locations[None, :] + shifts[:, None]).ravel()
        extra.append(jumps[(jumps >= lo) & (jumps <= hi)])
    candidates = np.unique(np.concatenate(extra))
    if d.is_discrete:
        u = lattice_offsets(d.locations[None, :], candidates[:, None])
        values = c_i * candidates + value_1d(qp, qm, u) @ d.masses
    else:
        values = np.array([c_i * t + expected_recourse_1d(qp, qm, d, t, 'exact') for t in candidates])
    k = argmin_smallest(candidates, values)
    return float(candidates[k]), float(values[k])


def solve_first_stage(prob: FirstStageProblem, q: CostVector, P: ProductDistribution,
                      variant='hat', step=None) -> FirstStageResult:
    """Minimise c^T x + Q(x) over the box, dimension by dimension."""
    if prob.m != q.m or P.m != q.m:
        raise ValueError("First-stage problem, costs and distribution disagree in dimension")
    step = get_config().solver.EXACT_GRID_STEP if step is None else step
    xs, total = [], 0.0
    for i, ((qp, qm), d) in enumerate(zip(q.pairs(), P)):
        lo, hi, c_i = prob.lower[i], prob.upper[i], prob.c[i]
        if variant == 'hat':
            check_bounded_below(c_i, qp, qm, lo, hi, i)
            x_i, f_i = _hat_dimension(c_i, qp, qm, d, lo, hi)
        elif variant == 'exact-grid':
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError("The exact-grid variant needs a finite box")
            x_i, f_i = _exact_grid_dimension(c_i, qp, qm, d, lo, hi, step)
        else:
            raise ValueError(f"Unknown first-stage variant {variant!r}; expected 'hat' or 'exact-grid'")
        xs.append(x_i)
        total += f_i
    return FirstStageResult(np.asarray(xs), float(total), method=variant)
