"""
One-dimensional and product probability measures, the unit-interval moving
average transformations and Wasserstein distances.
"""

import math
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicHermiteSpline
from scipy.stats import norm

from config.config import get_config
from numerics import (LinearProgram, NumericalError, PiecewisePolynomial,
                      lp_solve)

_IDENTITY = PiecewisePolynomial([-math.inf, math.inf], [[0.0, 1.0]])


def _merge_atoms(locations, masses, tol):
    order = np.argsort(locations, kind='stable')
    locations = np.asarray(locations, dtype=float)[order]
    masses = np.asarray(masses, dtype=float)[order]
    merged_locs, merged_masses = [], []
    for loc, mass in zip(locations, masses):
        if merged_locs and abs(loc - merged_locs[-1]) <= tol * max(1.0, abs(loc)):
            merged_masses[-1] += mass
        else:
            merged_locs.append(loc)
            merged_masses.append(mass)
    return np.asarray(merged_locs), np.asarray(merged_masses)


class Distribution1D:
    """Probability measure on the line: finitely many atoms plus a piecewise-polynomial density."""

    def __init__(self, atoms: Optional[Iterable[Tuple[float, float]]] = None,
                 density: Optional[PiecewisePolynomial] = None, validate: bool = True):
        cfg = get_config().distributions
        pairs = list(atoms) if atoms is not None else []
        locations = np.array([float(a) for a, _ in pairs])
        masses = np.array([float(w) for _, w in pairs])
        if np.any(~np.isfinite(locations)) or np.any(~np.isfinite(masses)):
            raise ValueError("Atom locations and masses must be finite")
        if np.any(masses <= 0):
            raise ValueError("Atom masses must be positive")
        self._locations, self._masses = _merge_atoms(locations, masses, cfg.ATOM_TOL)
        self._density = density if density is not None else PiecewisePolynomial.zero()
        if validate:
            self._validate()

    # ---------- constructors ----------
    @classmethod
    def point_mass(cls, a: float):
        return cls([(a, 1.0)])

    @classmethod
    def discrete(cls, locations: Sequence[float], masses: Optional[Sequence[float]] = None):
        locations = np.asarray(locations, dtype=float).ravel()
        if masses is None:
            masses = np.full(locations.size, 1.0 / max(locations.size, 1))
        return cls(list(zip(locations, np.asarray(masses, dtype=float).ravel())))

    @classmethod
    def uniform(cls, a: float, b: float):
        if not b > a:
            raise ValueError(f"Uniform distribution needs a < b, got ({a}, {b})")
        return cls(density=PiecewisePolynomial([a, b], [[1.0 / (b - a)]]))

    @classmethod
    def from_segments(cls, segments, atoms=None):
        """Density from (a, b, coefficients) triples, coefficients in powers of t - a."""
        segments = sorted(segments, key=lambda seg: seg[0])
        density = PiecewisePolynomial.zero()
        for a, b, coefs in segments:
            density = density + PiecewisePolynomial([a, b], [coefs])
        return cls(atoms=atoms, density=density)

    @classmethod
    def normal(cls, mean: float = 0.0, sd: float = 1.0, truncation=None, segments=None):
        """Truncated normal as a renormalised cubic Hermite spline of its density."""
        cfg = get_config().distributions
        truncation = cfg.NORMAL_TRUNCATION if truncation is None else truncation
        segments = cfg.NORMAL_SEGMENTS if segments is None else segments
        if sd <= 0:
            raise ValueError("Standard deviation must be positive")
        nodes = np.linspace(mean - truncation * sd, mean + truncation * sd, segments + 1)
        values = norm.pdf(nodes, loc=mean, scale=sd)
        slopes = -(nodes - mean) / sd ** 2 * values
        spline = CubicHermiteSpline(nodes, values, slopes)
        density = PiecewisePolynomial(nodes, [spline.c[::-1, j] for j in range(segments)])
        density = density * (1.0 / density.integrate())
        return cls(density=density)

    # ---------- validation ----------
    def _validate(self):
        cfg = get_config()
        dcfg = cfg.distributions
        if self._density.degree > cfg.numerics.MAX_DENSITY_DEGREE:
            raise ValueError(f"Density degree {self._density.degree} exceeds "
                             f"{cfg.numerics.MAX_DENSITY_DEGREE}")
        try:
            density_mass = self._density.integrate()
        except NumericalError as exc:
            raise ValueError(f"Density is not integrable: {exc}") from exc
        total = float(np.sum(self._masses)) + density_mass
        if abs(total - 1.0) > dcfg.MASS_TOL:
            raise ValueError(f"Total mass {total!r} differs from 1")

        breaks = self._density.breakpoints
        samples = []
        for a, b in zip(breaks[:-1], breaks[1:]):
            if np.isfinite(a) and np.isfinite(b):
                samples.extend(a + (b - a) * np.array([0.0, 0.25, 0.5, 0.75, 1.0 - 1e-9]))
        if samples:
            values = self._density(np.asarray(samples))
            scale = max(1.0, float(np.max(np.abs(values))))
            if np.min(values) < -dcfg.NEGATIVE_DENSITY_TOL * scale:
                raise ValueError("Density takes negative values")

    # ---------- accessors ----------
    @property
    def locations(self) -> np.ndarray:
        return self._locations.copy()

    @property
    def masses(self) -> np.ndarray:
        return self._masses.copy()

    @property
    def density(self) -> PiecewisePolynomial:
        return self._density

    @property
    def atoms(self) -> List[Tuple[float, float]]:
        return list(zip(self._locations.tolist(), self._masses.tolist()))

    @property
    def has_density(self) -> bool:
        return any(not self._density.is_zero_segment(j) for j in range(self._density.n_segments))

    @property
    def is_discrete(self) -> bool:
        return not self.has_density

    def support(self) -> Tuple[float, float]:
        lows, highs = [], []
        if self._locations.size:
            lows.append(self._locations[0])
            highs.append(self._locations[-1])
        if self.has_density:
            lo, hi = self._density.support()
            lows.append(lo)
            highs.append(hi)
        return float(min(lows)), float(max(highs))

    @cached_property
    def _density_cdf(self) -> PiecewisePolynomial:
        return self._density.antiderivative()

    @cached_property
    def _density_first_moment(self) -> PiecewisePolynomial:
        return (self._density * _IDENTITY).antiderivative()

    # ---------- distribution functions ----------
    def cdf(self, s):
        s_arr = np.asarray(s, dtype=float)
        cumulative = np.concatenate([[0.0], np.cumsum(self._masses)])
        atom_part = cumulative[np.searchsorted(self._locations, s_arr, side='right')]
        result = np.clip(self._density_cdf(s_arr) + atom_part, 0.0, 1.0)
        return float(result) if np.ndim(s) == 0 else result

    def cdf_left(self, s):
        """P(xi < s)."""
        s_arr = np.asarray(s, dtype=float)
        cumulative = np.concatenate([[0.0], np.cumsum(self._masses)])
        atom_part = cumulative[np.searchsorted(self._locations, s_arr, side='left')]
        result = np.clip(self._density_cdf(s_arr) + atom_part, 0.0, 1.0)
        return float(result) if np.ndim(s) == 0 else result

    def cdf_function(self) -> PiecewisePolynomial:
        """Right-continuous cdf as a piecewise polynomial."""
        if self._locations.size == 0:
            return self._density_cdf
        steps = PiecewisePolynomial.step_sum(self._locations, np.full(self._locations.size, np.inf),
                                             self._masses)
        return self._density_cdf + steps

    def quantile(self, u):
        """Generalised inverse inf{s : F(s) >= u}."""
        u_arr = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        if self.is_discrete:
            cumulative = np.cumsum(self._masses)
            idx = np.clip(np.searchsorted(cumulative, u_arr, side='left'), 0, self._masses.size - 1)
            result = self._locations[idx]
        else:
            tol = get_config().distributions.QUANTILE_TOL
            lo_s, hi_s = self.support()
            lo = np.full(u_arr.shape, lo_s - tol)
            hi = np.full(u_arr.shape, hi_s)
            while np.max(hi - lo, initial=0.0) > tol:
                mid = 0.5 * (lo + hi)
                above = self.cdf(mid) >= u_arr
                hi = np.where(above, mid, hi)
                lo = np.where(above, lo, mid)
            result = hi
        return float(result) if np.ndim(u) == 0 else result

    # ---------- expectations ----------
    def expect(self, h: PiecewisePolynomial, at_atoms=None) -> float:
        """E[h(xi)] with the density part integrated exactly.

        `at_atoms` evaluates the integrand at atom locations; it defaults to h
        and matters where h is discontinuous at an atom.
        """
        point_fn = h if at_atoms is None else at_atoms
        total = 0.0
        if self._locations.size:
            total += float(np.dot(self._masses, np.asarray(point_fn(self._locations), dtype=float)))
        if not self.has_density:
            return total
        if h.degree > 1:
            return total + (h * self._density).integrate()

        lo, hi = self._density.support()
        breaks = h.breakpoints
        a = np.clip(breaks[:-1], lo, hi)
        b = np.clip(breaks[1:], lo, hi)
        active = b > a
        if not np.any(active):
            return total
        a, b = a[active], b[active]
        coef = h.coefficients[active]
        origins = h.origins[active]
        mass = self._density_cdf(b) - self._density_cdf(a)
        first = self._density_first_moment(b) - self._density_first_moment(a)
        slope = coef[:, 1] if coef.shape[1] > 1 else np.zeros(coef.shape[0])
        origins = np.where(slope != 0.0, origins, 0.0)
        total += float(np.sum(coef[:, 0] * mass + slope * (first - origins * mass)))
        return total

    def mean(self) -> float:
        return self.expect(_IDENTITY)

    def __repr__(self):
        return (f"Distribution1D(atoms={self._locations.size}, "
                f"density_segments={self._density.n_segments if self.has_density else 0})")


class ProductDistribution:
    """Independent marginals."""

    def __init__(self, marginals: Sequence[Distribution1D]):
        marginals = list(marginals)
        if not marginals:
            raise ValueError("A product distribution needs at least one marginal")
        if not all(isinstance(d, Distribution1D) for d in marginals):
            raise ValueError("Marginals must be Distribution1D instances")
        self._marginals = marginals

    @classmethod
    def of(cls, *marginals):
        return cls(marginals)

    @property
    def marginals(self) -> List[Distribution1D]:
        return list(self._marginals)

    @property
    def m(self) -> int:
        return len(self._marginals)

    def __len__(self):
        return len(self._marginals)

    def __getitem__(self, i) -> Distribution1D:
        return self._marginals[i]

    def __iter__(self):
        return iter(self._marginals)

    @property
    def is_discrete(self) -> bool:
        return all(d.is_discrete for d in self._marginals)

    def to_joint(self) -> "JointDiscrete":
        return JointDiscrete.from_product(self)

    def __repr__(self):
        return f"ProductDistribution(m={self.m})"


class JointDiscrete:
    """Finitely supported measure on R^m."""

    def __init__(self, points, masses):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        masses = np.asarray(masses, dtype=float).ravel()
        if pts.shape[0] != masses.size or masses.size == 0:
            raise ValueError("Points and masses disagree in size")
        if np.any(masses <= 0):
            raise ValueError("Atom masses must be positive")
        if abs(masses.sum() - 1.0) > get_config().distributions.MASS_TOL:
            raise ValueError(f"Masses sum to {masses.sum()!r}, not 1")
        unique, inverse = np.unique(pts, axis=0, return_inverse=True)
        merged = np.zeros(unique.shape[0])
        np.add.at(merged, np.asarray(inverse).ravel(), masses)
        self._points, self._masses = unique, merged

    @classmethod
    def from_product(cls, P: ProductDistribution) -> "JointDiscrete":
        if not P.is_discrete:
            raise ValueError("Only discrete marginals expand to a joint discrete measure")
        grids = np.meshgrid(*[d.locations for d in P], indexing='ij')
        weights = np.meshgrid(*[d.masses for d in P], indexing='ij')
        points = np.column_stack([g.ravel() for g in grids])
        masses = np.prod(np.column_stack([w.ravel() for w in weights]), axis=1)
        return cls(points, masses / masses.sum())

    @property
    def points(self) -> np.ndarray:
        return self._points.copy()

    @property
    def masses(self) -> np.ndarray:
        return self._masses.copy()

    @property
    def m(self) -> int:
        return self._points.shape[1]

    def projection(self, i: int) -> Distribution1D:
        return Distribution1D.discrete(self._points[:, i], self._masses)

    def __repr__(self):
        return f"JointDiscrete(atoms={self._masses.size}, m={self.m})"


# =======================
# Operations
# =======================
def cdf(d: Distribution1D, s):
    return d.cdf(s)


def gamma_transform(d: Distribution1D) -> Distribution1D:
    """Unit-interval moving average of the cdf; the result has a density only."""
    cap = get_config().numerics.MAX_DENSITY_DEGREE
    if d.has_density and d.density.degree + 1 > cap:
        raise ValueError(f"Smoothing a degree-{d.density.degree} density exceeds the degree cap {cap}")
    density = PiecewisePolynomial.zero()
    if d.has_density:
        density = d.density.moving_average()
    if d.locations.size:
        locs = d.locations
        density = density + PiecewisePolynomial.step_sum(locs - 0.5, locs + 0.5, d.masses)
    return Distribution1D(density=density)


def gamma_alpha_transform(d: Distribution1D, alpha: float) -> Distribution1D:
    """Spread the mass of every cell [alpha + k, alpha + k + 1) uniformly over the cell."""
    cap = get_config().numerics.MAX_DENSITY_DEGREE
    if d.has_density and d.density.degree + 1 > cap:
        raise ValueError(f"Degree-{d.density.degree} density exceeds the degree cap {cap}")
    lo, hi = d.support()
    k_lo = math.floor(lo - alpha)
    k_hi = math.floor(hi - alpha) + 1
    edges = alpha + np.arange(k_lo, k_hi + 1, dtype=float)
    cell_mass = np.diff(d.cdf_left(edges))
    keep = cell_mass > 0.0
    density = PiecewisePolynomial.step_sum(edges[:-1][keep], edges[1:][keep], cell_mass[keep])
    scale = 1.0 / float(np.sum(cell_mass[keep]))
    return Distribution1D(density=density * scale)


def product_gamma(P: ProductDistribution) -> ProductDistribution:
    return ProductDistribution([gamma_transform(d) for d in P])


def product_gamma_alpha(P: ProductDistribution, alpha) -> ProductDistribution:
    alphas = np.broadcast_to(np.asarray(alpha, dtype=float), (P.m,))
    return ProductDistribution([gamma_alpha_transform(d, a) for d, a in zip(P, alphas)])


def _quantile_levels(d: Distribution1D) -> np.ndarray:
    points = d.locations
    if d.has_density:
        points = np.concatenate([points, d.density.finite_breakpoints()])
    return np.concatenate([d.cdf(points), d.cdf_left(points)])


def wasserstein_1d(d1: Distribution1D, d2: Distribution1D, p: float = 1.0) -> float:
    """Type-p Wasserstein distance between two measures on the line."""
    if p < 1:
        raise ValueError(f"Wasserstein order must be >= 1, got {p}")
    lo1, hi1 = d1.support()
    lo2, hi2 = d2.support()
    lo, hi = min(lo1, lo2), max(hi1, hi2)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("Distributions must have bounded support")
    if p == 1:
        if hi <= lo:
            return 0.0
        return (d1.cdf_function() - d2.cdf_function()).integrate_abs(lo, hi)

    levels = np.concatenate([[0.0, 1.0], _quantile_levels(d1), _quantile_levels(d2)])
    levels = np.unique(np.clip(levels, 0.0, 1.0))
    levels = levels[np.concatenate([[True], np.diff(levels) > 1e-15])]
    n_intervals = max(levels.size - 1, 1)
    n_nodes = max(4, int(math.ceil(get_config().distributions.QUANTILE_NODES / n_intervals)))
    nodes, weights = leggauss(n_nodes)
    total = 0.0
    for ua, ub in zip(levels[:-1], levels[1:]):
        u = 0.5 * (ub - ua) * nodes + 0.5 * (ua + ub)
        gap = np.abs(d1.quantile(u) - d2.quantile(u)) ** p
        total += 0.5 * (ub - ua) * float(np.dot(weights, gap))
    return total ** (1.0 / p)


def _transport_cost(points1, points2, p):
    diff = np.abs(points1[:, None, :] - points2[None, :, :]) ** p
    return diff.sum(axis=2)


def wasserstein_joint_discrete(d1: JointDiscrete, d2: JointDiscrete, p: float = 1.0) -> float:
    """Optimal transport LP with ground cost sum_i |s_i - t_i|^p."""
    if p < 1:
        raise ValueError(f"Wasserstein order must be >= 1, got {p}")
    if d1.m != d2.m:
        raise ValueError("Joint distributions live in different dimensions")
    n1, n2 = d1.masses.size, d2.masses.size
    cost = _transport_cost(d1.points, d2.points, p)
    A = np.zeros((n1 + n2, n1 * n2))
    for k in range(n1):
        A[k, k * n2:(k + 1) * n2] = 1.0
    for l in range(n2):
        A[n1 + l, l::n2] = 1.0
    lp = LinearProgram(cost.ravel(), A, ['='] * (n1 + n2), np.concatenate([d1.masses, d2.masses]))
    result = lp_solve(lp)
    if not result.optimal:
        raise NumericalError(f"Transportation LP ended with status {result.status}")
    return max(result.objective, 0.0) ** (1.0 / p)


def monotone_coupling(d1: Distribution1D, d2: Distribution1D) -> np.ndarray:
    """North-west corner coupling of two discrete laws on sorted atoms."""
    if not (d1.is_discrete and d2.is_discrete):
        raise ValueError("Monotone coupling needs discrete marginals")
    w1, w2 = d1.masses, d2.masses
    c1 = np.concatenate([[0.0], np.cumsum(w1) / w1.sum()])
    c2 = np.concatenate([[0.0], np.cumsum(w2) / w2.sum()])
    levels = np.unique(np.concatenate([c1, c2]))
    mids = 0.5 * (levels[:-1] + levels[1:])
    rows = np.clip(np.searchsorted(c1, mids, side='right') - 1, 0, w1.size - 1)
    cols = np.clip(np.searchsorted(c2, mids, side='right') - 1, 0, w2.size - 1)
    plan = np.zeros((w1.size, w2.size))
    np.add.at(plan, (rows, cols), np.diff(levels))
    return plan


def separable_attainment(d1: JointDiscrete, targets: Sequence[Distribution1D]) -> JointDiscrete:
    """Measure with the given marginals at joint distance equal to the separable lower bound.

    Each coordinate of d1 is moved by the optimal 1-D coupling of its projection
    to the matching target, independently across coordinates given the source point.
    """
    if len(targets) != d1.m:
        raise ValueError("One target marginal per coordinate is required")
    kernels, source_locs, target_locs = [], [], []
    for i, target in enumerate(targets):
        projection = d1.projection(i)
        plan = monotone_coupling(projection, target)
        kernels.append(plan / projection.masses[:, None])
        source_locs.append(projection.locations)
        target_locs.append(target.locations)

    accumulated = {}
    for point, mass in zip(d1.points, d1.masses):
        destinations = [((), mass)]
        for i in range(d1.m):
            row = kernels[i][int(np.argmin(np.abs(source_locs[i] - point[i])))]
            nonzero = np.flatnonzero(row > 0)
            destinations = [(prefix + (target_locs[i][j],), w * row[j])
                            for prefix, w in destinations for j in nonzero]
        for dest, w in destinations:
            accumulated[dest] = accumulated.get(dest, 0.0) + w
    points = np.array(list(accumulated.keys()))
    masses = np.array(list(accumulated.values()))
    return JointDiscrete(points, masses / masses.sum())
