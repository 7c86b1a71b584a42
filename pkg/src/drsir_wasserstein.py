"""
Wasserstein distributionally robust simple integer recourse.

Standard model: worst case of E[v] over the ball around the reference law.
Pragmatic model: worst case of E[v_hat] over the same ball, which is convex in x.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from config.config import get_config
from distributions import Distribution1D, JointDiscrete, ProductDistribution
from numerics import (ConvergenceError, LinearProgram, NumericalError,
                      PiecewisePolynomial, lp_solve, merge_breakpoints,
                      minimize_convex_1d)
from sir_core import (CostVector, FirstStageProblem, FirstStageResult,
                      argmin_smallest, as_tender_point, check_bounded_below,
                      expected_recourse, lattice_offsets, search_window, solve_first_stage,
                      value_1d, value_hat_1d, value_usc_1d)


@dataclass
class WassersteinBall:
    """Closed type-p Wasserstein ball of radius epsilon around a reference law."""

    reference: ProductDistribution
    p: float = 1.0
    epsilon: float = 0.0

    def __post_init__(self):
        self.p = float(self.p)
        self.epsilon = float(self.epsilon)
        if self.p < 1:
            raise ValueError(f"Wasserstein order must be >= 1, got {self.p}")
        if not (self.epsilon >= 0 and np.isfinite(self.epsilon)):
            raise ValueError(f"Radius must be finite and nonnegative, got {self.epsilon}")

    @property
    def m(self) -> int:
        return self.reference.m

    @property
    def budget(self) -> float:
        """Transport budget epsilon^p."""
        return self.epsilon ** self.p


@dataclass
class DualCertificate:
    lam: float
    nu: List[np.ndarray]
    objective: float
    iterations: int = 0
    history: List[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("Dual multiplier must be nonnegative")


# =======================
# Dual potential nu^lambda and its excess r^lambda
# =======================
def _check_lambda(qp, qm, lam):
    if lam < max(qp, qm):
        raise ValueError(f"lambda={lam} is below max(q+, q-)={max(qp, qm)}; the dual is infeasible")


def nu_1d(qp, qm, lam, u):
    """sup over w of v_usc(w) - lam |u - w|, by enumerating the candidate maximisers."""
    u = np.asarray(u, dtype=float)
    base = np.floor(u)
    best = value_usc_1d(qp, qm, u)
    offsets = [np.full_like(u, off) for off in (0.0, -1.0, 1.0)]
    relative = [base - 1.0, base, base + 1.0, base + 2.0]
    for target in relative + offsets:
        best = np.maximum(best, value_usc_1d(qp, qm, target) - lam * np.abs(u - target))
    return best


def r_lambda_branch(qp, qm, lam, u):
    """Closed-form sawtooth excess of nu over v_usc, valid off the lattice."""
    u = np.asarray(u, dtype=float)
    u_lam = -(qp - qm) / lam
    to_floor = u - np.floor(u)
    to_ceil = np.ceil(u) - u
    if qp >= qm:
        return np.where(u <= u_lam, np.maximum(qm - lam * to_floor, 0.0),
                        np.where(u < 0, np.maximum(qp - qm - lam * to_ceil, 0.0),
                                 np.maximum(qp - lam * to_ceil, 0.0)))
    return np.where(u <= 0, np.maximum(qm - lam * to_floor, 0.0),
                    np.where(u < u_lam, np.maximum(qm - qp - lam * to_floor, 0.0),
                             np.maximum(qp - lam * to_ceil, 0.0)))


def r_lambda(q: CostVector, lam: float, s: float, x: float, dim: int = 0):
    """r^lambda for one dimension; on the lattice it is defined as nu^lambda - v_usc."""
    qp, qm = q.pair(dim)
    _check_lambda(qp, qm, lam)
    u = np.asarray(s, dtype=float) - x
    on_lattice = u == np.floor(u)
    reconciled = nu_1d(qp, qm, lam, u) - value_usc_1d(qp, qm, u)
    result = np.where(on_lattice, reconciled, r_lambda_branch(qp, qm, lam, u))
    return float(result) if np.ndim(result) == 0 else result


def nu_lambda(q: CostVector, lam: float, s, x) -> float:
    """nu^lambda(s, x) = sup_w { v_usc(w, x) - lam ||s - w||_1 }, separable over dimensions."""
    if lam < q.qinf:
        raise ValueError(f"lambda={lam} is below ||q||_inf={q.qinf}; the dual is infeasible")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    x = as_tender_point(x, q.m)
    if s.shape[-1] != q.m:
        raise ValueError(f"Point has {s.shape[-1]} entries, expected {q.m}")
    return np.sum(nu_1d(q.q_plus, q.q_minus, lam, s - x), axis=-1)


def nu_breaks(qp, qm, lam, u_lo, u_hi) -> np.ndarray:
    """Every kink of nu in [u_lo, u_hi]: lattice points and crossings of its three lines per cell."""
    points = [np.arange(math.floor(u_lo) - 1, math.ceil(u_hi) + 2, dtype=float)]
    for k in range(math.floor(u_lo) - 1, math.ceil(u_hi) + 1):
        mid = k + 0.5
        flat = float(value_usc_1d(qp, qm, mid))
        # lattice candidates right of the cell (k+1, k+2, 0, 1) set the rising line,
        # those left of it (k, k-1, 0, -1) the falling one
        rising = max(float(value_usc_1d(qp, qm, j)) - lam * j for j in (k + 1, k + 2, 0, 1) if j >= k + 1)
        falling = max(float(value_usc_1d(qp, qm, j)) + lam * j for j in (k, k - 1, 0, -1) if j <= k)
        # rising line: rising + lam*u ; falling line: falling - lam*u
        crossings = [(flat - rising) / lam, (falling - flat) / lam, (falling - rising) / (2 * lam)]
        points.append(np.array([c for c in crossings if k < c < k + 1]))
    return np.unique(np.concatenate(points))


def nu_piecewise(qp, qm, lam, x, lo, hi) -> PiecewisePolynomial:
    """nu^lambda(., x) on [lo, hi] as a continuous piecewise-linear function of xi."""
    _check_lambda(qp, qm, lam)
    # crossings within rounding of a lattice point coincide after the shift by x
    pts = merge_breakpoints(x + nu_breaks(qp, qm, lam, lo - x, hi - x))
    values = nu_1d(qp, qm, lam, pts - x)
    slopes = np.diff(values) / np.diff(pts)
    return PiecewisePolynomial(pts, [[v, m] for v, m in zip(values[:-1], slopes)])


def expected_nu_1d(qp, qm, lam, d: Distribution1D, x: float) -> float:
    if d.is_discrete:
        return float(np.dot(d.masses, nu_1d(qp, qm, lam, d.locations - x)))
    lo, hi = d.support()
    return d.expect(nu_piecewise(qp, qm, lam, x, lo, hi),
                    at_atoms=lambda s: nu_1d(qp, qm, lam, np.asarray(s) - x))


def r_lambda_mean_bound(q: CostVector, lam: float) -> float:
    """Upper bound sum_i ||q_i||^2 / (2 lam) on E[r^lambda] under laws whose marginals are smoothed."""
    if lam < q.qinf:
        raise ValueError(f"lambda={lam} is below ||q||_inf={q.qinf}")
    return float(np.sum(q.qbar ** 2) / (2.0 * lam))


# =======================
# Standard DRSIR, large radius
# =======================
def large_eps_threshold(q: CostVector) -> float:
    """Smallest epsilon^p for which lambda = ||q||_inf is dual optimal."""
    if q.qinf == 0:
        return 0.0
    return float(np.sum(q.qbar) / q.qinf)


def standard_drsir_large_eps(q: CostVector, ball: WassersteinBall, x) -> float:
    """E[nu^{||q||}(xi, x)] + ||q||_inf epsilon for a type-1 ball of large radius."""
    if ball.p != 1:
        raise ValueError("The large-radius closed form holds for p = 1 only")
    if ball.m != q.m:
        raise ValueError("Ball and costs disagree in dimension")
    threshold = large_eps_threshold(q)
    if ball.budget < threshold - 1e-12:
        raise ValueError(f"Radius {ball.epsilon} is below the closed-form threshold {threshold}; "
                         f"use worst_case_oracle instead")
    x = as_tender_point(x, q.m)
    lam = q.qinf
    if lam == 0:
        return 0.0
    total = sum(expected_nu_1d(qp, qm, lam, d, xi)
                for (qp, qm), d, xi in zip(q.pairs(), ball.reference, x))
    return float(total + lam * ball.epsilon)


def newsvendor_quantile(c: float, q_plus: float, reference: Distribution1D) -> float:
    """Large-radius newsvendor optimum 1 + min{z : F(z) >= 1 - c/q+}."""
    if not q_plus > c > 0:
        raise ValueError("Closed form requires q+ > c > 0")
    return 1.0 + float(reference.quantile(1.0 - c / q_plus))


# =======================
# Pragmatic DRSIR
# =======================
def pragmatic_drsir_p1(q: CostVector, ball: WassersteinBall, x) -> float:
    """E[v_hat(xi, x)] + ||q||_inf epsilon."""
    if ball.p != 1:
        raise ValueError("The pragmatic closed form needs p = 1; use pragmatic_drsir_rowgen")
    return expected_recourse(q, ball.reference, x, 'hat') + q.qinf * ball.epsilon


def _hat_pieces(qp, qm):
    """v_hat(w) = max_j alpha_j + slope_j (w - x) for its three affine pieces."""
    return np.array([0.5 * qm, 0.5 * (qp + qm), 0.5 * qp]), np.array([-qm, qp - qm, qp])


def _best_step(slope, lam, p):
    """argmax and max over d of slope*d - lam |d|^p."""
    slope = np.asarray(slope, dtype=float)
    if p == 1:
        if np.any(np.abs(slope) > lam + 1e-12):
            return np.full(slope.shape, np.nan), np.full(slope.shape, np.inf)
        return np.zeros(slope.shape), np.zeros(slope.shape)
    if lam <= 0:
        gain = np.where(slope == 0, 0.0, np.inf)
        return np.zeros(slope.shape), gain
    length = (np.abs(slope) / (lam * p)) ** (1.0 / (p - 1.0))
    return np.sign(slope) * length, np.abs(slope) * length * (1.0 - 1.0 / p)


def separate_hat(qp, qm, lam, p, s, x):
    """Exact sup over w of v_hat(w - x) - lam |s - w|^p; returns (value, maximiser)."""
    alpha, slopes = _hat_pieces(qp, qm)
    steps, gains = _best_step(slopes, lam, p)
    at_s = alpha + slopes * (s - x)
    totals = at_s + gains
    j = int(np.argmax(totals))
    return float(totals[j]), float(s + steps[j]) if np.isfinite(steps[j]) else math.nan


class _InnerCuts:
    """Accumulated destination points per (dimension, atom) for a fixed tender point."""

    def __init__(self, q: CostVector, marginals, x, p, tol):
        self.q, self.marginals, self.x, self.p, self.tol = q, marginals, x, p, tol
        self.points = [[[float(s)] for s in d.locations] for d in marginals]
        self.cuts_added = 0

    def _cut_value(self, qp, qm, lam, s, x_i, points):
        w = np.asarray(points)
        return float(np.max(value_hat_1d(qp, qm, w - x_i) - lam * np.abs(s - w) ** self.p))

    def potentials(self, lam):
        """nu at every atom after generating cuts until no violation exceeds tol."""
        all_nu = []
        for i, d in enumerate(self.marginals):
            qp, qm = self.q.pair(i)
            nu_i = np.empty(d.locations.size)
            for k, s in enumerate(d.locations):
                while True:
                    current = self._cut_value(qp, qm, lam, s, self.x[i], self.points[i][k])
                    true_value, maximiser = separate_hat(qp, qm, lam, self.p, s, self.x[i])
                    if not np.isfinite(true_value):
                        nu_i[k] = math.inf
                        break
                    if true_value - current <= self.tol:
                        nu_i[k] = current
                        break
                    self.points[i][k].append(maximiser)
                    self.cuts_added += 1
            all_nu.append(nu_i)
        return all_nu


def pragmatic_drsir_rowgen(q: CostVector, ball: WassersteinBall, x, tol=None) -> DualCertificate:
    """Dual of the pragmatic problem: min over lambda of lambda eps^p + E[nu_lambda(xi)].

    nu is generated from cuts at separating destinations; lambda is found by
    golden-section search on the convex dual objective.
    """
    cfg = get_config().solver
    tol = cfg.ROWGEN_INNER_TOL if tol is None else tol
    if ball.m != q.m:
        raise ValueError("Ball and costs disagree in dimension")
    if not ball.reference.is_discrete:
        raise ValueError("Row generation needs a discrete reference distribution")
    x = as_tender_point(x, q.m)
    marginals = list(ball.reference)
    cuts = _InnerCuts(q, marginals, x, ball.p, tol)
    history = []

    if ball.epsilon == 0 or q.qinf == 0:
        nu = [value_hat_1d(qp, qm, d.locations - xi) for (qp, qm), d, xi in zip(q.pairs(), marginals, x)]
        objective = float(sum(np.dot(d.masses, n) for d, n in zip(marginals, nu)))
        history.append({'iteration': 0, 'lambda': math.inf, 'objective': objective, 'cuts': 0})
        return DualCertificate(math.inf if q.qinf > 0 else 0.0, nu, objective, 0, history)

    def dual_objective(lam):
        nu = cuts.potentials(lam)
        value = lam * ball.budget + sum(float(np.dot(d.masses, n)) for d, n in zip(marginals, nu))
        history.append({'iteration': len(history), 'lambda': lam, 'objective': value,
                        'cuts': cuts.cuts_added})
        if cfg.VERBOSE:
            print(f"  lambda={lam:.6g} dual={value:.10g} cuts={cuts.cuts_added}")
        return value

    diameter = max(d.support()[1] - d.support()[0] for d in marginals) + 1.0
    lam_lo = q.qinf if ball.p == 1 else 0.0
    lam_hi = q.qinf * (1.0 + diameter ** (ball.p - 1.0))
    for _ in range(cfg.ROWGEN_LAMBDA_WIDENINGS + 1):
        lam_star, best = minimize_convex_1d(dual_objective, lam_lo, lam_hi, tol=cfg.ROWGEN_LAMBDA_TOL)
        if lam_star < lam_hi - 10 * cfg.ROWGEN_LAMBDA_TOL or ball.p == 1:
            nu = cuts.potentials(lam_star)
            return DualCertificate(lam_star, nu, best, len(history), history)
        lam_lo, lam_hi = lam_hi * 0.5, lam_hi * 10.0
    raise ConvergenceError(f"Optimal lambda keeps hitting the search cap {lam_hi}", gap=None)


# =======================
# Grid worst-case oracle
# =======================
@dataclass
class GridSpec:
    step: Optional[float] = None
    pad: Optional[float] = None
    method: str = 'greedy'
    refine_check: bool = False


@dataclass
class OracleResult:
    value: float
    distribution: JointDiscrete
    grid_gap: Optional[float] = None
    coarse: bool = False
    marginals: List[Distribution1D] = field(default_factory=list)

    def __iter__(self):
        yield self.value
        yield self.distribution


def _oracle_kernel(sense, variant):
    if variant == 'hat':
        return value_hat_1d
    if variant != 'usc':
        raise ValueError(f"Oracle variant must be 'usc' or 'hat', got {variant!r}")
    # The infimum is attained by the lower semicontinuous value function itself
    return value_usc_1d if sense == 'max' else value_1d


def _destination_grid(d: Distribution1D, x_i, epsilon, step, pad):
    lo = d.locations.min() - (epsilon + pad)
    hi = d.locations.max() + (epsilon + pad)
    uniform = np.arange(lo, hi + 0.5 * step, step)
    lattice = x_i + np.arange(math.floor(lo - x_i), math.ceil(hi - x_i) + 1, dtype=float)
    lattice = lattice[(lattice >= lo) & (lattice <= hi)]
    near = np.concatenate([lattice - step, lattice, lattice + step])
    return np.unique(np.concatenate([d.locations, near, uniform]))


def _pareto(costs, values):
    """Points whose value beats every cheaper point; costs sorted ascending."""
    running = np.maximum.accumulate(values)
    keep = np.concatenate([[True], values[1:] > running[:-1]])
    return costs[keep], values[keep], keep


def _upper_hull(costs, values):
    hull = []
    for c, v in zip(costs, values):
        while len(hull) >= 2:
            (c0, v0), (c1, v1) = hull[-2], hull[-1]
            if (c1 - c0) * (v - v0) - (v1 - v0) * (c - c0) >= 0:
                hull.pop()
            else:
                break
        hull.append((c, v))
    return hull


def _atom_chain(s, grid, gvalues, p):
    """Concave hull of (transport cost, value) over destinations, starting at s itself."""
    idx = int(np.searchsorted(grid, s))
    right = slice(idx, None)
    left = slice(idx, None, -1) if idx < grid.size and grid[idx] == s else slice(idx - 1 if idx > 0 else None, None, -1)
    pieces_c, pieces_v, pieces_d = [], [], []
    for side in (right, left):
        dest = grid[side]
        if dest.size == 0:
            continue
        costs = np.abs(dest - s) ** p
        c, v, keep = _pareto(costs, gvalues[side])
        pieces_c.append(c)
        pieces_v.append(v)
        pieces_d.append(dest[keep])
    costs = np.concatenate(pieces_c)
    values = np.concatenate(pieces_v)
    dests = np.concatenate(pieces_d)
    order = np.lexsort((-values, costs))
    costs, values, dests = costs[order], values[order], dests[order]
    costs, values, keep = _pareto(costs, values)
    dests = dests[keep]
    hull = _upper_hull(costs, values)
    lookup = {(c, v): dest for c, v, dest in zip(costs, values, dests)}
    return [(c, v, lookup[(c, v)]) for c, v in hull]


def _greedy_transport(chains, masses, budget):
    """Fill the budget with hull segments in decreasing order of value per unit cost."""
    segments = []
    for key, chain in chains.items():
        w = masses[key]
        for t in range(len(chain) - 1):
            dc = chain[t + 1][0] - chain[t][0]
            dv = chain[t + 1][1] - chain[t][1]
            if dv <= 0:
                break
            segments.append((-dv / dc if dc > 0 else -math.inf, key, t, w * dc, w * dv))
    segments.sort(key=lambda seg: (seg[0], seg[1], seg[2]))

    position = {key: (0, 0.0) for key in chains}
    gain = 0.0
    remaining = budget
    for _, key, t, use, value in segments:
        if position[key][0] != t or position[key][1] > 0:
            continue
        if use <= remaining:
            remaining -= use
            gain += value
            position[key] = (t + 1, 0.0)
        else:
            theta = remaining / use if use > 0 else 0.0
            gain += theta * value
            position[key] = (t, theta)
            remaining = 0.0
            break
    return gain, position


def _oracle_greedy(q, ball, x, step, pad, sense, variant):
    sign = 1.0 if sense == 'max' else -1.0
    kernel = _oracle_kernel(sense, variant)
    chains, masses, base = {}, {}, 0.0
    for i, d in enumerate(ball.reference):
        qp, qm = q.pair(i)
        grid = _destination_grid(d, x[i], ball.epsilon, step, pad)
        gvalues = sign * kernel(qp, qm, lattice_offsets(grid, x[i]))
        for k, (s, w) in enumerate(zip(d.locations, d.masses)):
            chain = _atom_chain(s, grid, gvalues, ball.p)
            chains[(i, k)] = chain
            masses[(i, k)] = w
            base += w * chain[0][1]
    gain, position = _greedy_transport(chains, masses, ball.budget)

    marginals = []
    for i, d in enumerate(ball.reference):
        atoms = []
        for k, w in enumerate(d.masses):
            t, theta = position[(i, k)]
            chain = chains[(i, k)]
            atoms.append((chain[t][2], w * (1.0 - theta)))
            if theta > 0:
                atoms.append((chain[t + 1][2], w * theta))
        atoms = [(loc, mass) for loc, mass in atoms if mass > 0]
        total = sum(mass for _, mass in atoms)
        marginals.append(Distribution1D([(loc, mass / total) for loc, mass in atoms]))
    return sign * (base + gain), marginals


def _oracle_simplex(q, ball, x, step, pad, sense, variant):
    kernel = _oracle_kernel(sense, variant)
    blocks = []
    for i, d in enumerate(ball.reference):
        qp, qm = q.pair(i)
        grid = _destination_grid(d, x[i], ball.epsilon, step, pad)
        gvalues = kernel(qp, qm, lattice_offsets(grid, x[i]))
        for k, (s, w) in enumerate(zip(d.locations, d.masses)):
            blocks.append((i, w, grid, gvalues, np.abs(grid - s) ** ball.p))
    n = sum(block[2].size for block in blocks)
    c = np.concatenate([w * g for _, w, _, g, _ in blocks])
    A = np.zeros((len(blocks) + 1, n))
    start = 0
    for r, (_, w, grid, _, cost) in enumerate(blocks):
        A[r, start:start + grid.size] = 1.0
        A[-1, start:start + grid.size] = w * cost
        start += grid.size
    b = np.concatenate([np.ones(len(blocks)), [ball.budget]])
    lp = LinearProgram(c, A, ['='] * len(blocks) + ['<='], b, upper=np.ones(n),
                       maximize=(sense == 'max'))
    result = lp_solve(lp)
    if not result.optimal:
        raise NumericalError(f"Oracle LP ended with status {result.status}")

    per_dim = {}
    start = 0
    for i, w, grid, _, _ in blocks:
        share = result.x[start:start + grid.size]
        start += grid.size
        for loc, frac in zip(grid, share):
            if frac > 1e-12:
                per_dim.setdefault(i, {})
                per_dim[i][loc] = per_dim[i].get(loc, 0.0) + w * frac
    marginals = []
    for i in range(ball.m):
        total = sum(per_dim[i].values())
        marginals.append(Distribution1D([(loc, mass / total) for loc, mass in per_dim[i].items()]))
    return result.objective, marginals


def worst_case_oracle(q: CostVector, ball: WassersteinBall, x, grid: Optional[GridSpec] = None,
                      sense='max', variant='usc', tol=None) -> OracleResult:
    """Best or worst expected recourse over the ball, with destinations restricted to a grid.

    The grid problem is a transport LP with a single budget row. The greedy
    method solves it exactly through per-atom concave hulls, including the split
    of the budget across dimensions; the simplex method solves the same LP directly.
    """
    cfg = get_config().solver
    grid = grid or GridSpec()
    step = cfg.ORACLE_GRID_STEP if grid.step is None else grid.step
    pad = cfg.ORACLE_RANGE_PAD if grid.pad is None else grid.pad
    tol = cfg.ORACLE_TOL if tol is None else tol
    if sense not in ('max', 'min'):
        raise ValueError(f"sense must be 'max' or 'min', got {sense!r}")
    if ball.m != q.m:
        raise ValueError("Ball and costs disagree in dimension")
    if not ball.reference.is_discrete:
        raise ValueError("The grid oracle needs a discrete reference distribution")
    x = as_tender_point(x, q.m)

    solve = {'greedy': _oracle_greedy, 'simplex': _oracle_simplex}.get(grid.method)
    if solve is None:
        raise ValueError(f"Unknown oracle method {grid.method!r}")
    value, marginals = solve(q, ball, x, step, pad, sense, variant)

    grid_gap, coarse = None, False
    if grid.refine_check:
        finer, _ = solve(q, ball, x, 0.5 * step, pad, sense, variant)
        grid_gap = abs(finer - value)
        coarse = grid_gap > 10 * tol
        if coarse:
            print(f"⚠️ Oracle grid step {step:g} looks too coarse: refinement moved the value by {grid_gap:.3g}")
    joint = ProductDistribution(marginals).to_joint()
    return OracleResult(float(value), joint, grid_gap, coarse, marginals)


# =======================
# First stage under a Wasserstein ball
# =======================
def _large_eps_dimension(c_i, qp, qm, lam, d: Distribution1D, lo, hi):
    window_lo, window_hi = search_window(d, lo, hi)
    objective = lambda t: c_i * t + expected_nu_1d(qp, qm, lam, d, t)
    if d.is_discrete:
        s_lo, s_hi = d.support()
        kinks = nu_breaks(qp, qm, lam, s_lo - window_hi, s_hi - window_lo)
        candidates = (d.locations[:, None] - kinks[None, :]).ravel()
        candidates = np.unique(np.concatenate([candidates[(candidates >= window_lo) & (candidates <= window_hi)],
                                               [window_lo, window_hi]]))
        u = d.locations[None, :] - candidates[:, None]
        values = c_i * candidates + nu_1d(qp, qm, lam, u) @ d.masses
    else:
        step = get_config().solver.EXACT_GRID_STEP
        candidates = np.unique(np.append(np.arange(window_lo, window_hi, step), window_hi))
        values = np.array([objective(t) for t in candidates])
    k = argmin_smallest(candidates, values)
    return float(candidates[k]), float(values[k])


def _rowgen_first_stage(prob, q, ball, tol):
    """Joint master LP over (x, lambda, nu) with Kelley cuts from the affine pieces of v_hat."""
    cfg = get_config().solver
    marginals = list(ball.reference)
    m = q.m
    offsets = [0]
    for d in marginals:
        offsets.append(offsets[-1] + d.locations.size)
    n_nu = offsets[-1]
    n = m + 1 + n_nu
    lam_col = m

    lower = np.empty(n)
    upper = np.empty(n)
    for i, d in enumerate(marginals):
        qp, qm = q.pair(i)
        check_bounded_below(prob.c[i], qp, qm, prob.lower[i], prob.upper[i], i)
        lower[i], upper[i] = search_window(d, prob.lower[i], prob.upper[i])
    diameter = max(d.support()[1] - d.support()[0] for d in marginals) + 1.0
    lower[lam_col] = q.qinf if ball.p == 1 else 0.0
    upper[lam_col] = 1e3 * max(q.qinf, 1.0) * (1.0 + diameter ** (ball.p - 1.0))
    lower[m + 1:] = -np.inf
    upper[m + 1:] = np.inf

    objective = np.zeros(n)
    objective[:m] = prob.c
    objective[lam_col] = ball.budget
    for i, d in enumerate(marginals):
        objective[m + 1 + offsets[i]:m + 1 + offsets[i + 1]] = d.masses

    rows, rhs = [], []

    def add_cuts(i, k, s, dest):
        qp, qm = q.pair(i)
        alpha, slopes = _hat_pieces(qp, qm)
        for a_j, g_j in zip(alpha, slopes):
            row = np.zeros(n)
            row[m + 1 + offsets[i] + k] = 1.0
            row[i] = g_j
            row[lam_col] = abs(s - dest) ** ball.p
            rows.append(row)
            rhs.append(a_j + g_j * dest)

    for i, d in enumerate(marginals):
        for k, s in enumerate(d.locations):
            for step in (0.0, -0.5, 0.5, -1.0, 1.0, -2.0, 2.0):
                add_cuts(i, k, s, s + step)

    history = []
    for iteration in range(cfg.ROWGEN_MAX_ITERATIONS):
        lp = LinearProgram(objective, np.array(rows), ['>='] * len(rows), np.array(rhs), lower, upper)
        result = lp_solve(lp)
        if not result.optimal:
            raise NumericalError(f"Row-generation master ended with status {result.status}")
        x, lam = result.x[:m], result.x[lam_col]
        nu = result.x[m + 1:]
        true_total, worst = 0.0, 0.0
        nu_true = []
        for i, d in enumerate(marginals):
            qp, qm = q.pair(i)
            nu_i = np.empty(d.locations.size)
            for k, s in enumerate(d.locations):
                true_value, dest = separate_hat(qp, qm, lam, ball.p, s, x[i])
                nu_i[k] = true_value
                violation = true_value - nu[offsets[i] + k]
                worst = max(worst, violation)
                if violation > tol and np.isfinite(true_value):
                    add_cuts(i, k, s, dest)
                elif violation > tol:
                    # lambda = 0 with p > 1: push the cuts further out
                    reach = 4.0 * (iteration + 1)
                    add_cuts(i, k, s, s - reach)
                    add_cuts(i, k, s, s + reach)
            nu_true.append(nu_i)
            true_total += float(np.dot(d.masses, nu_i))
        upper_bound = float(prob.c @ x) + lam * ball.budget + true_total
        history.append({'iteration': iteration, 'lower_bound': result.objective,
                        'upper_bound': upper_bound, 'max_violation': worst, 'cuts': len(rows)})
        if cfg.VERBOSE:
            print(f"  iter {iteration}: LB={result.objective:.10g} UB={upper_bound:.10g} viol={worst:.3g}")
        if worst <= tol or upper_bound - result.objective <= tol:
            certificate = DualCertificate(float(lam), nu_true, upper_bound - float(prob.c @ x),
                                          iteration + 1, history)
            return FirstStageResult(np.asarray(x), upper_bound, 'pragmatic-rowgen', certificate, history)
    raise ConvergenceError(f"Row generation stopped after {cfg.ROWGEN_MAX_ITERATIONS} iterations",
                           gap=history[-1]['upper_bound'] - history[-1]['lower_bound'])


def solve_first_stage_drsir(prob: FirstStageProblem, q: CostVector, ball: WassersteinBall,
                            method='pragmatic-w1', tol=None) -> FirstStageResult:
    """First-stage minimisation of c^T x plus a Wasserstein DRSIR recourse."""
    if prob.m != q.m or ball.m != q.m:
        raise ValueError("First-stage problem, costs and ball disagree in dimension")
    tol = get_config().solver.ROWGEN_INNER_TOL if tol is None else tol

    if method == 'pragmatic-w1':
        if ball.p != 1:
            raise ValueError("pragmatic-w1 needs p = 1")
        base = solve_first_stage(prob, q, ball.reference, 'hat')
        return FirstStageResult(base.x, base.objective + q.qinf * ball.epsilon, method)

    if method == 'standard-large-eps':
        if ball.p != 1:
            raise ValueError("standard-large-eps needs p = 1")
        threshold = large_eps_threshold(q)
        if ball.budget < threshold - 1e-12:
            raise ValueError(f"Radius {ball.epsilon} is below the closed-form threshold {threshold}")
        lam = q.qinf
        xs, total = [], 0.0
        for i, ((qp, qm), d) in enumerate(zip(q.pairs(), ball.reference)):
            check_bounded_below(prob.c[i], qp, qm, prob.lower[i], prob.upper[i], i)
            x_i, f_i = _large_eps_dimension(prob.c[i], qp, qm, lam, d, prob.lower[i], prob.upper[i])
            xs.append(x_i)
            total += f_i
        return FirstStageResult(np.asarray(xs), float(total + lam * ball.epsilon), method)

    if method == 'pragmatic-rowgen':
        if not ball.reference.is_discrete:
            raise ValueError("Row generation needs a discrete reference distribution")
        if ball.epsilon == 0:
            base = solve_first_stage(prob, q, ball.reference, 'hat')
            return FirstStageResult(base.x, base.objective, method)
        return _rowgen_first_stage(prob, q, ball, tol)

    raise ValueError(f"Unknown method {method!r}")
