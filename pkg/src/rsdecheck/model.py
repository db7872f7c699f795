"""Coefficients, convex domains, signed measures and the Le Gall transform.

Everything here is immutable and evaluates on arrays whose last axis is the
state dimension, so the same objects serve single points and whole path
batches.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ModelError

__all__ = [
    "ConvexDomain",
    "Affine",
    "Constant",
    "Piecewise",
    "Callback",
    "CoefficientSpec",
    "SignedMeasure",
    "LeGallTransform",
    "MarginReport",
    "project",
    "penalty",
    "check_cone_condition",
    "eval_f_nu",
    "build_transform",
    "transform_coefficients",
    "validate_dissipativity",
    "validate_ellipticity",
    "validate_h5",
    "validate_lipschitz",
]


def _point(x, dim=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if dim is not None and x.shape[-1] != dim:
        raise ConfigurationError(
            f"dimension mismatch: point has {x.shape[-1]} coordinates, domain has {dim}")
    return x


# ---------------------------------------------------------------------------
# Convex domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """Closed convex set with an exact Euclidean projection.

    Use the constructors :meth:`ball`, :meth:`box`, :meth:`halfspace` and
    :meth:`whole_space`. A halfspace is ``{x : <normal, x> >= offset}``, so
    ``normal`` points into the domain.
    """

    kind: str
    dim: int
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    normal: Optional[np.ndarray] = None
    offset: Optional[float] = None

    @classmethod
    def ball(cls, center, radius):
        center = _point(center)
        if not radius > 0:
            raise ConfigurationError(f"ball radius must be positive, got {radius}")
        return cls("ball", center.size, center=center, radius=float(radius))

    @classmethod
    def box(cls, lower, upper):
        lower, upper = _point(lower), _point(upper)
        if lower.shape != upper.shape:
            raise ConfigurationError("box bounds have different dimensions")
        if not np.all(lower < upper):
            raise ConfigurationError("box needs lower[i] < upper[i] for every i")
        return cls("box", lower.size, lower=lower, upper=upper)

    @classmethod
    def interval(cls, lo, hi):
        return cls.box([lo], [hi])

    @classmethod
    def halfspace(cls, normal, offset=0.0):
        normal = _point(normal)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
            raise ConfigurationError("halfspace normal must be a unit vector")
        return cls("halfspace", normal.size, normal=normal, offset=float(offset))

    @classmethod
    def whole_space(cls, dim):
        if dim < 1:
            raise ConfigurationError("dimension must be >= 1")
        return cls("whole_space", int(dim))

    @property
    def bounded(self):
        return self.kind in ("ball", "box")

    @property
    def scale(self):
        """Characteristic length used to make tolerances dimensionless."""
        if self.kind == "ball":
            return 2.0 * self.radius
        if self.kind == "box":
            return float(np.linalg.norm(self.upper - self.lower))
        return 1.0

    def project(self, x):
        x = _point(x, self.dim)
        if self.kind == "ball":
            v = x - self.center
            r = np.linalg.norm(v, axis=-1, keepdims=True)
            shrink = np.where(r > self.radius, self.radius / np.where(r > 0, r, 1.0), 1.0)
            return self.center + v * shrink
        if self.kind == "box":
            return np.clip(x, self.lower, self.upper)
        if self.kind == "halfspace":
            gap = self.offset - x @ self.normal
            return x + np.maximum(gap, 0.0)[..., None] * self.normal
        return x.copy()

    def penalty(self, x):
        x = _point(x, self.dim)
        return x - self.project(x)

    def contains(self, x, tol=0.0):
        x = _point(x, self.dim)
        if self.kind == "ball":
            return np.linalg.norm(x - self.center, axis=-1) <= self.radius + tol
        if self.kind == "box":
            return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)
        if self.kind == "halfspace":
            return x @ self.normal >= self.offset - tol
        return np.ones(x.shape[:-1], dtype=bool)

    def inner_point(self):
        if self.kind == "ball":
            return self.center.copy()
        if self.kind == "box":
            return 0.5 * (self.lower + self.upper)
        if self.kind == "halfspace":
            return self.offset * self.normal + self.normal
        return np.zeros(self.dim)

    def describe(self):
        if self.kind == "ball":
            return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}
        if self.kind == "box":
            return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}
        if self.kind == "halfspace":
            return {"kind": "halfspace", "normal": self.normal.tolist(), "offset": self.offset}
        return {"kind": "whole_space", "dim": self.dim}


def project(domain: ConvexDomain, x):
    return domain.project(x)


def penalty(domain: ConvexDomain, x):
    """beta(x) = x - P(x); zero exactly on the closure."""
    return domain.penalty(x)


@dataclass(frozen=True)
class MarginReport:
    """Outcome of a grid check: ``passed`` iff ``worst_margin <= tol``."""

    passed: bool
    worst_margin: float
    n_points: int
    worst_index: int = -1
    analytic_margin: Optional[float] = None


def check_cone_condition(domain: ConvexDomain, a, c, grid) -> MarginReport:
    """Evaluate <x - a, beta(x)> >= c |beta(x)| on every grid point.

    The margin reported is ``c|beta(x)| - <x - a, beta(x)>`` (<= 0 passes).
    """
    grid = _point(grid, domain.dim)
    if grid.ndim == 1:
        grid = grid[None, :]
    if grid.shape[0] == 0:
        raise ConfigurationError("cone-condition grid is empty")
    a = _point(a, domain.dim)
    beta = domain.penalty(grid)
    lhs = np.einsum("...i,...i->...", grid - a, beta)
    margin = c * np.linalg.norm(beta, axis=-1) - lhs
    tol = 1e-12 * max(1.0, float(np.max(np.abs(lhs))))
    i = int(np.argmax(margin))
    return MarginReport(bool(margin[i] <= tol), float(margin[i]), grid.shape[0], i)


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Affine:
    """Drift x -> A x + c."""

    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if A.shape != (c.size, c.size):
            raise ConfigurationError(f"affine drift: A has shape {A.shape}, c has {c.size} entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)

    @property
    def dim(self):
        return self.c.size

    def __call__(self, x):
        return x @ self.A.T + self.c


@dataclass(frozen=True, eq=False)
class Constant:
    """Diffusion matrix independent of the state."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if s.shape[0] != s.shape[1]:
            raise ConfigurationError("constant diffusion must be a square matrix")
        object.__setattr__(self, "sigma", s)

    @property
    def dim(self):
        return self.sigma.shape[0]

    def __call__(self, x):
        return np.broadcast_to(self.sigma, x.shape[:-1] + self.sigma.shape)


@dataclass(frozen=True, eq=False)
class Piecewise:
    """Scalar piecewise-affine function, right-continuous at the thresholds.

    ``thresholds[0]`` is ``-inf``; on ``[thresholds[j], thresholds[j+1])`` the
    value is ``slopes[j] * x + intercepts[j]``.
    """

    thresholds: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        b = np.asarray(self.intercepts, dtype=float)
        if not (t.ndim == s.ndim == b.ndim == 1 and t.size == s.size == b.size and t.size > 0):
            raise ConfigurationError("piecewise coefficient needs equal-length, non-empty lists")
        if t[0] != -np.inf:
            raise ConfigurationError("first piecewise threshold must be -inf")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("piecewise thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "slopes", s)
        object.__setattr__(self, "intercepts", b)

    @classmethod
    def from_pieces(cls, pieces):
        t, s, b = zip(*pieces)
        return cls(np.array(t, float), np.array(s, float), np.array(b, float))

    @classmethod
    def constant(cls, value):
        return cls(np.array([-np.inf]), np.zeros(1), np.array([float(value)]))

    @property
    def dim(self):
        return 1

    def scalar(self, x):
        x = np.asarray(x, dtype=float)
        j = np.searchsorted(self.thresholds, x, side="right") - 1
        return self.slopes[j] * x + self.intercepts[j]

    def __call__(self, x):
        return self.scalar(x[..., 0])[..., None]

    def pieces(self):
        return list(zip(self.thresholds.tolist(), self.slopes.tolist(), self.intercepts.tolist()))


@dataclass(frozen=True, eq=False)
class Callback:
    """Escape hatch: any vectorised callable ``fn(x[..., d]) -> array``."""

    fn: Callable
    dim: int
    name: str = "callback"

    def __call__(self, x):
        return np.asarray(self.fn(x), dtype=float)


@dataclass(frozen=True, eq=False)
class CoefficientSpec:
    """Drift and diffusion of dX = b(X) dt + sigma(X) dB, plus declared constants.

    The constants are those of the dissipativity, ellipticity and Lipschitz
    conditions; they are user-declared and checked on grids, never inferred.

    delta
        dissipativity rate: ||s(x)-s(y)||_HS^2 + 2<x-y, b(x)-b(y)> <= -2 delta |x-y|^2
    sigma_sup
        sup_x of the operator norm of sigma
    sigma_lip
        global Lipschitz constant of sigma
    ellipticity
        lambda with sigma^T sigma >= lambda I
    k
        constant with |<sigma(x)-sigma(y), x-y>| <= k |x-y|
    """

    drift: object
    diffusion: object
    delta: Optional[float] = None
    sigma_sup: Optional[float] = None
    sigma_lip: Optional[float] = None
    ellipticity: Optional[float] = None
    k: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if self.drift.dim != self.diffusion.dim:
            raise ConfigurationError(
                f"drift is {self.drift.dim}-dimensional but diffusion is {self.diffusion.dim}-dimensional")
        for name in ("delta", "sigma_sup", "sigma_lip", "ellipticity", "k"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigurationError(f"declared constant {name} must be nonnegative")

    @property
    def dim(self):
        return self.drift.dim

    @property
    def additive(self):
        return isinstance(self.diffusion, Constant) or (
            isinstance(self.diffusion, Piecewise) and np.all(self.diffusion.slopes == 0)
            and np.all(self.diffusion.intercepts == self.diffusion.intercepts[0]))

    def b(self, x):
        return self.drift(x)

    def sigma(self, x):
        s = self.diffusion(x)
        if s.shape == x.shape:
            s = s[..., None]
        return s.reshape(x.shape + (self.dim,))

    def constants(self):
        return {k: getattr(self, k) for k in ("delta", "sigma_sup", "sigma_lip", "ellipticity", "k")}

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigurationError(f"model is missing declared constants: {', '.join(missing)}")

    @classmethod
    def ornstein_uhlenbeck(cls, delta, sigma=1.0, dim=1, **declared):
        """dX = -delta X dt + sigma dB with exact declared constants."""
        s = float(sigma)
        kw = dict(delta=delta, sigma_sup=abs(s), sigma_lip=0.0, ellipticity=s * s, k=0.0,
                  label=f"OU(delta={delta}, sigma={s}, d={dim})")
        kw.update(declared)
        return cls(Affine(-delta * np.eye(dim), np.zeros(dim)), Constant(s * np.eye(dim)), **kw)


# ---------------------------------------------------------------------------
# Validation on grids
# ---------------------------------------------------------------------------

def _pairs(pair_grid, dim):
    pg = np.asarray(pair_grid, dtype=float)
    if dim == 1 and pg.ndim == 2 and pg.shape[1] == 2:
        pg = pg[..., None]
    if pg.ndim != 3 or pg.shape[1] != 2 or pg.shape[2] != dim:
        raise ConfigurationError(f"pair grid must have shape (n, 2, {dim})")
    if pg.shape[0] == 0:
        raise ConfigurationError("pair grid is empty")
    return pg[:, 0, :], pg[:, 1, :]


def validate_dissipativity(sde: CoefficientSpec, pair_grid) -> MarginReport:
    """Worst value of ||s(x)-s(y)||^2 + 2<x-y, b(x)-b(y)> + 2 delta |x-y|^2 (<= 0 passes)."""
    sde.require("delta")
    x, y = _pairs(pair_grid, sde.dim)
    ds = sde.sigma(x) - sde.sigma(y)
    dx = x - y
    sq = np.einsum("ni,ni->n", dx, dx)
    margin = (np.einsum("nij,nij->n", ds, ds)
              + 2.0 * np.einsum("ni,ni->n", dx, sde.b(x) - sde.b(y))
              + 2.0 * sde.delta * sq)
    analytic = None
    if isinstance(sde.drift, Affine) and sde.additive:
        A = sde.drift.A
        analytic = float(np.max(np.linalg.eigvalsh(A + A.T)) + 2.0 * sde.delta)
    tol = 1e-12 * max(1.0, float(np.max(sq)))
    i = int(np.argmax(margin))
    return MarginReport(bool(margin[i] <= tol), float(margin[i]), x.shape[0], i, analytic)


def validate_ellipticity(sde: CoefficientSpec, grid) -> MarginReport:
    """Margin ``lambda - min eig(sigma^T sigma)`` over the grid (<= 0 passes)."""
    sde.require("ellipticity")
    g = np.asarray(grid, dtype=float)
    if sde.dim == 1 and g.ndim == 1:
        g = g[:, None]
    g = _point(g, sde.dim).reshape(-1, sde.dim)
    s = sde.sigma(g)
    eig = np.linalg.eigvalsh(np.einsum("nki,nkj->nij", s, s))[:, 0]
    margin = sde.ellipticity - eig
    i = int(np.argmax(margin))
    return MarginReport(bool(margin[i] <= 1e-12), float(margin[i]), g.shape[0], i)


def validate_h5(sde: CoefficientSpec, pair_grid) -> MarginReport:
    """Margin ``|(sigma(x)-sigma(y))^T (x-y)| - k|x-y|`` (<= 0 passes)."""
    sde.require("k")
    x, y = _pairs(pair_grid, sde.dim)
    dx = x - y
    v = np.einsum("nij,ni->nj", sde.sigma(x) - sde.sigma(y), dx)
    margin = np.linalg.norm(v, axis=-1) - sde.k * np.linalg.norm(dx, axis=-1)
    i = int(np.argmax(margin))
    return MarginReport(bool(margin[i] <= 1e-12), float(margin[i]), x.shape[0], i)


def validate_lipschitz(sde: CoefficientSpec, pair_grid, k) -> MarginReport:
    """Margin ``max(|b(x)-b(y)|, ||s(x)-s(y)||) - k|x-y|`` (<= 0 passes)."""
    x, y = _pairs(pair_grid, sde.dim)
    dist = np.linalg.norm(x - y, axis=-1)
    db = np.linalg.norm(sde.b(x) - sde.b(y), axis=-1)
    ds = np.linalg.norm(sde.sigma(x) - sde.sigma(y), axis=(-2, -1))
    margin = np.maximum(db, ds) - k * dist
    i = int(np.argmax(margin))
    return MarginReport(bool(margin[i] <= 1e-12 * max(1.0, float(dist.max()))), float(margin[i]), x.shape[0], i)


# ---------------------------------------------------------------------------
# Signed measures and the Le Gall transform
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """Bounded signed measure on the line: atoms plus a continuous part.

    The continuous part is given by its distribution function
    ``G(x) = nu_c(]-inf, x])`` as a piecewise-linear interpolant through
    ``(cont_x, cont_g)``; ``G`` is 0 left of the first breakpoint and constant
    right of the last one.
    """

    atom_locations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    atom_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cont_x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cont_g: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.atom_locations, dtype=float))
        w = np.atleast_1d(np.asarray(self.atom_weights, dtype=float))
        cx = np.atleast_1d(np.asarray(self.cont_x, dtype=float))
        cg = np.atleast_1d(np.asarray(self.cont_g, dtype=float))
        if loc.shape != w.shape or cx.shape != cg.shape:
            raise ModelError("measure: location/weight arrays differ in length")
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(w))
                and np.all(np.isfinite(cx)) and np.all(np.isfinite(cg))):
            raise ModelError("measure: non-finite entries give unbounded variation")
        if np.any(np.diff(loc) <= 0) or np.any(np.diff(cx) <= 0):
            raise ModelError("measure: locations must be strictly increasing")
        if cg.size and cg[0] != 0.0:
            raise ModelError("measure: continuous distribution function must start at 0")
        for name, arr in (("atom_locations", loc), ("atom_weights", w), ("cont_x", cx), ("cont_g", cg)):
            object.__setattr__(self, name, arr)

    @classmethod
    def dirac(cls, beta, at=0.0):
        return cls([at], [beta])

    @classmethod
    def zero(cls):
        return cls()

    def validate(self):
        bad = np.abs(self.atom_weights) >= 1.0
        if np.any(bad):
            a = self.atom_locations[bad][0]
            raise ModelError(f"atom at {a} has |weight| >= 1; f_nu is undefined")

    @property
    def total_variation(self):
        return float(np.sum(np.abs(self.atom_weights)) + np.sum(np.abs(np.diff(self.cont_g))))

    def cont_cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.cont_x.size == 0:
            return np.zeros_like(x)
        return np.interp(x, self.cont_x, self.cont_g, left=0.0, right=self.cont_g[-1])


def eval_f_nu(measure: SignedMeasure, x):
    """f_nu(x) = exp(-2 nu_c(]-inf,x])) * prod_{a_i <= x} (1 - w_i)/(1 + w_i)."""
    measure.validate()
    x = np.asarray(x, dtype=float)
    ratios = (1.0 - measure.atom_weights) / (1.0 + measure.atom_weights)
    cum = np.concatenate([[1.0], np.cumprod(ratios)])
    j = np.searchsorted(measure.atom_locations, x, side="right")
    return np.exp(-2.0 * measure.cont_cdf(x)) * cum[j]


@dataclass(frozen=True, eq=False)
class LeGallTransform:
    """Closed-form F(x) = int_0^x f_nu and its inverse.

    On piece ``j`` (``knots[j] <= x < knots[j+1]``, outer pieces unbounded)
    ``f_nu(x) = amp[j] * exp(-2 rate[j] (x - knots[j]))``.
    """

    measure: SignedMeasure
    knots: np.ndarray
    amp: np.ndarray
    rate: np.ndarray
    F_knots: np.ndarray
    m: float
    M: float

    # piece j covers [knots[j-1], knots[j]) with knots[-1] = -inf; j = 0..len(knots)
    def _piece(self, x):
        return np.searchsorted(self.knots, x, side="right")

    def _start(self, j):
        # left anchor of piece j; the leftmost piece is anchored at knots[0]
        return self.knots[np.maximum(j - 1, 0)]

    def f(self, x):
        x = np.asarray(x, dtype=float)
        j = self._piece(x)
        return self.amp[j] * np.exp(-2.0 * self.rate[j] * (x - self._start(j)))

    def _integral(self, j, u):
        # int_0^u amp*exp(-2 rate s) ds on piece j, u may be negative
        a, r = self.amp[j], self.rate[j]
        small = np.abs(r * u) < 1e-8
        rs = np.where(small, 1.0, r)
        exact = a * (-np.expm1(-2.0 * rs * u)) / (2.0 * rs)
        series = a * u * (1.0 - r * u + (2.0 / 3.0) * (r * u) ** 2)
        return np.where(small, series, exact)

    def F(self, x):
        x = np.asarray(x, dtype=float)
        j = self._piece(x)
        start = self._start(j)
        base = self.F_knots[np.maximum(j - 1, 0)]
        return base + self._integral(j, x - start)

    def F_inverse(self, y):
        y = np.asarray(y, dtype=float)
        j = np.searchsorted(self.F_knots, y, side="right")
        start = self._start(j)
        base = self.F_knots[np.maximum(j - 1, 0)]
        a, r = self.amp[j], self.rate[j]
        dy = y - base
        with np.errstate(divide="ignore", invalid="ignore"):
            arg = 1.0 - 2.0 * r * dy / a
            u_exp = -np.log1p(-2.0 * r * dy / a) / (2.0 * r)
        u_lin = dy / a
        small = np.abs(r * dy / a) < 1e-8
        u = np.where(small, u_lin * (1.0 + r * u_lin), u_exp)
        bad = ~small & ~(arg > 0)
        x = start + u
        if np.any(bad) or not np.all(np.isfinite(x)):
            x = np.where(bad | ~np.isfinite(x), self._bisect(y), x)
        return x

    def _bisect(self, y, tol=1e-12):
        # slope floor m > 0 makes F a bi-Lipschitz bijection; bracket from that
        y = np.asarray(y, dtype=float)
        lo = np.minimum(y / self.M, y / self.m) - 1.0
        hi = np.maximum(y / self.M, y / self.m) + 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            above = self.F(mid) > y
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
            if np.all(hi - lo <= tol):
                break
        return 0.5 * (lo + hi)

    @property
    def is_identity(self):
        return bool(np.all(self.amp == 1.0) and np.all(self.rate == 0.0))


def build_transform(measure: SignedMeasure) -> LeGallTransform:
    measure.validate()
    knots = np.union1d(measure.atom_locations, measure.cont_x)
    if knots.size == 0:
        # identity: a single dummy knot at 0 keeps the piece bookkeeping uniform
        return LeGallTransform(measure, np.zeros(1), np.ones(2), np.zeros(2), np.zeros(1), 1.0, 1.0)
    n = knots.size
    # piece j in 0..n: piece 0 = (-inf, knots[0]), piece j = [knots[j-1], knots[j])
    starts = np.concatenate([[knots[0]], knots])
    amp = eval_f_nu(measure, starts)
    amp[0] = eval_f_nu(measure, np.nextafter(knots[0], -np.inf))
    rate = np.zeros(n + 1)
    if measure.cont_x.size >= 2:
        g_hi = measure.cont_cdf(knots[1:])
        g_lo = measure.cont_cdf(knots[:-1])
        rate[1:n] = (g_hi - g_lo) / np.diff(knots)
    tr = LeGallTransform(measure, knots, amp, rate, np.zeros(n), 1.0, 1.0)
    # F at each knot, accumulated outward from 0
    F_knots = np.empty(n)
    for i, k in enumerate(knots):
        F_knots[i] = _F_from_zero(tr, k)
    # left limits at knot[j] of piece j (j=1..n-1) plus piece starts
    vals = [amp]
    if n >= 2:
        vals.append(amp[1:n] * np.exp(-2.0 * rate[1:n] * np.diff(knots)))
    allv = np.concatenate(vals)
    return LeGallTransform(measure, knots, amp, rate, F_knots, float(allv.min()), float(allv.max()))


def _F_from_zero(tr, x):
    # integrate f from 0 to x piece by piece using the closed form
    lo, hi, sign = (0.0, x, 1.0) if x >= 0 else (x, 0.0, -1.0)
    cuts = np.concatenate([[lo], tr.knots[(tr.knots > lo) & (tr.knots < hi)], [hi]])
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        j = tr._piece(np.array(a))
        start = tr._start(j)
        total += float(tr._integral(j, np.array(b - start)) - tr._integral(j, np.array(a - start)))
    return sign * total


def transform_coefficients(sde: CoefficientSpec, t: LeGallTransform) -> CoefficientSpec:
    """Coefficients of Y = F(X): b_bar = (b f)∘F^-1 and sigma_bar = (sigma f)∘F^-1.

    When nu has no continuous part and both coefficients are piecewise affine
    (or affine/constant), the result is again piecewise affine and exact.
    """
    if sde.dim != 1:
        raise ConfigurationError("the local-time transform is one-dimensional only")
    drift, diff = _as_piecewise(sde.drift), _as_piecewise(sde.diffusion)
    exact = drift is not None and diff is not None and np.all(t.rate == 0.0)
    label = f"LeGall[{sde.label}]" if sde.label else "LeGall"
    if exact:
        nb, ns = _compose_piecewise(drift, t), _compose_piecewise(diff, t)
    else:
        b, s = sde.b, sde.sigma

        def bbar(y):
            x = t.F_inverse(y[..., 0])[..., None]
            return b(x) * t.f(x)

        def sbar(y):
            x = t.F_inverse(y[..., 0])[..., None]
            return s(x)[..., 0] * t.f(x)

        nb, ns = Callback(bbar, 1, "b_bar"), Callback(sbar, 1, "sigma_bar")
    return CoefficientSpec(nb, ns, delta=None, sigma_sup=None, sigma_lip=None,
                           ellipticity=None, k=None, label=label)


def _as_piecewise(c):
    if isinstance(c, Piecewise):
        return c
    if isinstance(c, Affine):
        return Piecewise(np.array([-np.inf]), c.A[0], c.c)
    if isinstance(c, Constant):
        return Piecewise.constant(c.sigma[0, 0])
    return None


def _compose_piecewise(p: Piecewise, t: LeGallTransform) -> Piecewise:
    # on a common refinement x = start + (y - F(start))/f, value * f is affine in y
    xcuts = np.union1d(p.thresholds[1:], t.knots)
    ycuts = t.F(xcuts) if xcuts.size else xcuts
    xs = np.concatenate([[xcuts[0] - 1.0] if xcuts.size else [0.0], xcuts])
    slopes, intercepts = [], []
    for x0 in xs:
        jp = np.searchsorted(p.thresholds, x0, side="right") - 1
        fj = float(t.f(x0))
        Fx = float(t.F(x0))
        s, c = p.slopes[jp], p.intercepts[jp]
        # x = x0 + (y - Fx)/fj ; (s x + c) fj = s y + fj (s x0 + c) - s Fx
        slopes.append(s)
        intercepts.append(fj * (s * x0 + c) - s * Fx)
    return Piecewise(np.concatenate([[-np.inf], ycuts]), np.array(slopes), np.array(intercepts))
