"""Euler-type simulation of ordinary, reflected and coupled diffusions.

All schemes are vectorised over a leading batch axis: noise increments come
in as ``(n_paths, n_steps, d)`` and trajectories go out as
``(n_paths, n_steps + 1, d)``. A single ``(n_steps, d)`` panel is accepted as
well and the batch axis is dropped again on output.

Noise is counter-based: the increments of path ``i`` are drawn from a Philox
stream keyed on ``(master_seed, i)``, so any subset of paths can be
regenerated bit-exactly and the result never depends on how paths are split
across workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ModelError, SimulationBlowup
from .model import (CoefficientSpec, ConvexDomain, LeGallTransform, SignedMeasure,
                    build_transform, transform_coefficients)

BLOWUP = 1e12
DEFAULT_CHUNK = 2048

__all__ = [
    "TimeGrid", "NoisePanel", "Path", "ReflectedPath", "GirsanovCoupledPaths",
    "HarnackCoupledPaths", "RhoSpec", "make_noise", "euler_path", "penalized_path",
    "projected_path", "girsanov_coupled", "xi_schedule", "xi_derivative",
    "harnack_coupled", "sdel_path", "map_paths",
]


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > 0 or self.n_steps < 1:
            raise ConfigurationError(f"time grid needs T > 0 and n_steps >= 1, got {self.T}, {self.n_steps}")

    @classmethod
    def from_dt(cls, T, dt):
        n = int(round(T / dt))
        if n < 1 or abs(n * dt - T) > 1e-9 * T:
            raise ConfigurationError(f"dt={dt} does not divide T={T}")
        return cls(float(T), n)

    @property
    def dt(self):
        return self.T / self.n_steps

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    def refined(self, factor=2):
        return TimeGrid(self.T, self.n_steps * factor)

    def index_of(self, t):
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - t) > 1e-9 * max(1.0, self.T):
            raise ConfigurationError(f"time {t} is not a grid point of {self}")
        return k


@dataclass(frozen=True, eq=False)
class NoisePanel:
    master_seed: int
    path_index: np.ndarray
    increments: np.ndarray


def _generator(master_seed, index):
    key = np.array([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index) & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def make_noise(master_seed, path_index, grid: TimeGrid, d=1) -> NoisePanel:
    """Brownian increments N(0, dt) for one path index or a sequence of them."""
    scalar = np.ndim(path_index) == 0
    idx = np.atleast_1d(np.asarray(path_index, dtype=np.int64))
    sd = np.sqrt(grid.dt)
    inc = np.empty((idx.size, grid.n_steps, d))
    for r, i in enumerate(idx):
        inc[r] = _generator(master_seed, i).standard_normal((grid.n_steps, d))
    inc *= sd
    if scalar:
        inc = inc[0]
    return NoisePanel(int(master_seed), idx, inc)


def map_paths(fn: Callable, n_paths: int, chunk: int = DEFAULT_CHUNK, workers: int = 1):
    """Apply ``fn(indices)`` to consecutive index chunks and concatenate.

    ``fn`` returns a dict of arrays with a leading path axis. Chunk boundaries
    depend only on ``chunk``, and results are reassembled in index order, so
    the output is identical for any ``workers``.
    """
    starts = range(0, n_paths, chunk)
    blocks = [np.arange(s, min(s + chunk, n_paths)) for s in starts]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, blocks))
    else:
        parts = [fn(b) for b in blocks]
    if not parts:
        return {}
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


# ---------------------------------------------------------------------------
# Path containers
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Path:
    states: np.ndarray
    grid: TimeGrid
    latent: Optional[np.ndarray] = None

    @property
    def final(self):
        return self.states[..., -1, :]


@dataclass(eq=False)
class ReflectedPath(Path):
    eta_increments: Optional[np.ndarray] = None

    @property
    def eta(self):
        """Cumulative reflection term eta(t_k), starting from eta(0) = 0."""
        inc = self.eta_increments
        zero = np.zeros(inc.shape[:-2] + (1, inc.shape[-1]))
        return np.concatenate([zero, np.cumsum(inc, axis=-2)], axis=-2)

    @property
    def eta_total_variation(self):
        return np.sum(np.linalg.norm(self.eta_increments, axis=-1), axis=-1)


@dataclass(eq=False)
class GirsanovCoupledPaths:
    x_path: ReflectedPath
    y_path: ReflectedPath
    rho_energy: np.ndarray

    @property
    def entropy(self):
        """Girsanov estimate of H(Q | P_X) = E int |rho|^2 dt / 2."""
        return 0.5 * float(np.mean(self.rho_energy))


@dataclass(eq=False)
class HarnackCoupledPaths:
    x_path: Path
    y_path: Path
    log_weight: np.ndarray
    met: np.ndarray
    meeting_step: np.ndarray
    glue_gap: np.ndarray

    @property
    def weight(self):
        return np.exp(self.log_weight)


@dataclass(frozen=True, eq=False)
class RhoSpec:
    """Bounded drift perturbation rho(t, x) entering as sigma(x) rho dt.

    Either a constant vector or a vectorised callable ``fn(t, x) -> (..., d)``
    whose sup-norm is declared.
    """

    value: Optional[np.ndarray] = None
    fn: Optional[Callable] = None
    sup_norm: Optional[float] = None

    @classmethod
    def constant(cls, value):
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(value=v, sup_norm=float(np.linalg.norm(v)))

    def __call__(self, t, x):
        if self.fn is None:
            return np.broadcast_to(self.value, x.shape)
        return np.asarray(self.fn(t, x), dtype=float)

    def scaled(self, factor):
        if self.fn is None:
            return RhoSpec.constant(self.value * factor)
        f = self.fn
        return RhoSpec(fn=lambda t, x: factor * f(t, x), sup_norm=abs(factor) * self.sup_norm)

    @property
    def is_zero(self):
        return self.fn is None and not np.any(self.value)


# ---------------------------------------------------------------------------
# Schemes
# ---------------------------------------------------------------------------

def _increments(noise):
    inc = noise.increments if isinstance(noise, NoisePanel) else np.asarray(noise, dtype=float)
    single = inc.ndim == 2
    if single:
        inc = inc[None]
    return inc, single


def _start(x0, n, d):
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 0:
        x0 = x0.reshape(1)
    if x0.shape[-1] != d:
        raise ConfigurationError(f"initial point has dimension {x0.shape[-1]}, model has {d}")
    if not np.all(np.isfinite(x0)):
        raise ConfigurationError("initial point is not finite")
    return np.broadcast_to(x0, (n, d)).copy()


def _check_grid(grid, inc):
    if inc.shape[1] != grid.n_steps:
        raise ConfigurationError(f"noise has {inc.shape[1]} steps, grid has {grid.n_steps}")


def _guard(x, k):
    if not np.all(np.abs(x) <= BLOWUP):
        raise SimulationBlowup(f"state left the finite range at step {k}", step=k)


def _diff_times(sde, x, dB):
    return np.einsum("nij,nj->ni", sde.sigma(x), dB)


def _squeeze(single, *arrays):
    return tuple(a[0] if single else a for a in arrays)


def euler_path(sde: CoefficientSpec, x0, grid: TimeGrid, noise) -> Path:
    """X_{k+1} = X_k + b(X_k) dt + sigma(X_k) dB_k."""
    inc, single = _increments(noise)
    _check_grid(grid, inc)
    n, d, dt = inc.shape[0], sde.dim, grid.dt
    out = np.empty((n, grid.n_steps + 1, d))
    x = _start(x0, n, d)
    out[:, 0] = x
    for k in range(grid.n_steps):
        x = x + sde.b(x) * dt + _diff_times(sde, x, inc[:, k])
        _guard(x, k + 1)
        out[:, k + 1] = x
    return Path(*_squeeze(single, out), grid)


def _check_inside(domain, x0):
    if not np.all(domain.contains(x0, tol=1e-12)):
        raise ConfigurationError(f"initial point {np.asarray(x0).tolist()} is outside the domain")


def penalized_path(sde, domain: ConvexDomain, eps, x0, grid: TimeGrid, noise) -> ReflectedPath:
    """Explicit scheme for dX = b dt + sigma dB - beta(X) dt / eps."""
    if not eps > 0:
        raise ConfigurationError("penalization eps must be positive")
    if grid.dt > eps / 2:
        raise ConfigurationError(
            f"penalized scheme needs dt <= eps/2 (dt={grid.dt:g}, eps={eps:g})")
    _check_inside(domain, x0)
    inc, single = _increments(noise)
    _check_grid(grid, inc)
    n, d, dt = inc.shape[0], sde.dim, grid.dt
    out = np.empty((n, grid.n_steps + 1, d))
    eta = np.empty((n, grid.n_steps, d))
    x = _start(x0, n, d)
    out[:, 0] = x
    for k in range(grid.n_steps):
        push = (dt / eps) * domain.penalty(x)
        x = x + sde.b(x) * dt + _diff_times(sde, x, inc[:, k]) - push
        _guard(x, k + 1)
        out[:, k + 1] = x
        eta[:, k] = push
    states, eta = _squeeze(single, out, eta)
    return ReflectedPath(states, grid, eta_increments=eta)


def projected_path(sde, domain: ConvexDomain, x0, grid: TimeGrid, noise) -> ReflectedPath:
    """Euler step followed by projection; the projection residual is d(eta)."""
    _check_inside(domain, x0)
    inc, single = _increments(noise)
    _check_grid(grid, inc)
    n, d, dt = inc.shape[0], sde.dim, grid.dt
    out = np.empty((n, grid.n_steps + 1, d))
    eta = np.empty((n, grid.n_steps, d))
    x = _start(x0, n, d)
    out[:, 0] = x
    for k in range(grid.n_steps):
        xt = x + sde.b(x) * dt + _diff_times(sde, x, inc[:, k])
        _guard(xt, k + 1)
        x = domain.project(xt)
        out[:, k + 1] = x
        eta[:, k] = xt - x
    states, eta = _squeeze(single, out, eta)
    return ReflectedPath(states, grid, eta_increments=eta)


def girsanov_coupled(sde, domain: ConvexDomain, x0, rho: RhoSpec, grid: TimeGrid,
                     noise) -> GirsanovCoupledPaths:
    """X carries the extra drift sigma(X) rho, Y does not; both see the same noise.

    Under the simulation measure the shared noise plays the role of the
    Brownian motion B~ of the change of measure, so (X, Y) is a coupling of
    Q and P_X, and ``rho_energy`` is int |rho|^2 dt per path.
    """
    if not isinstance(rho, RhoSpec):
        rho = RhoSpec.constant(rho)
    _check_inside(domain, x0)
    inc, single = _increments(noise)
    _check_grid(grid, inc)
    n, d, dt = inc.shape[0], sde.dim, grid.dt
    xs = np.empty((n, grid.n_steps + 1, d))
    ys = np.empty_like(xs)
    ex = np.empty((n, grid.n_steps, d))
    ey = np.empty_like(ex)
    x = _start(x0, n, d)
    y = x.copy()
    xs[:, 0] = x
    ys[:, 0] = y
    energy = np.zeros(n)
    for k in range(grid.n_steps):
        t = k * dt
        r = rho(t, x)
        energy += np.einsum("ni,ni->n", r, r) * dt
        dB = inc[:, k]
        xt = x + sde.b(x) * dt + _diff_times(sde, x, dB + r * dt)
        yt = y + sde.b(y) * dt + _diff_times(sde, y, dB)
        _guard(xt, k + 1)
        _guard(yt, k + 1)
        x, y = domain.project(xt), domain.project(yt)
        xs[:, k + 1], ys[:, k + 1] = x, y
        ex[:, k], ey[:, k] = xt - x, yt - y
    xs, ys, ex, ey, energy = _squeeze(single, xs, ys, ex, ey, energy)
    return GirsanovCoupledPaths(ReflectedPath(xs, grid, eta_increments=ex),
                                ReflectedPath(ys, grid, eta_increments=ey), energy)


def xi_schedule(delta, theta, grid: TimeGrid):
    """xi(t_k) = ((2 - theta)/(-2 delta)) (1 - exp(-2 delta (t_k - T))), k < n_steps."""
    if not 0 < theta < 2:
        raise ConfigurationError(f"theta must lie in (0, 2), got {theta}")
    if not delta > 0:
        raise ConfigurationError("xi schedule needs delta > 0")
    t = grid.times[:-1]
    return (2.0 - theta) / (-2.0 * delta) * (-np.expm1(-2.0 * delta * (t - grid.T)))


def xi_derivative(delta, theta, t, T):
    return -(2.0 - theta) * np.exp(2.0 * delta * (T - np.asarray(t, dtype=float)))


def _solve(s, v):
    if s.shape[-1] == 1:
        return v / s[..., 0]
    return np.linalg.solve(s, v[..., None])[..., 0]


def harnack_coupled(sde, domain: ConvexDomain, x, y, theta, grid: TimeGrid, noise,
                    meet_tol=None, store_paths=True) -> HarnackCoupledPaths:
    """Coupling that forces Y onto X by time T, with its Girsanov weight.

    Y receives the extra drift sigma(Y) sigma(X)^-1 (X - Y) / xi_t. The weight
    log R accumulates -<a_k, dB_k> - |a_k|^2 dt / 2 with
    a_k = sigma(X_k)^-1 (X_k - Y_k) / xi_k, which is an exact discrete
    exponential martingale, so E[R_T f(X_T)] estimates P_T f(y).

    The pair is glued as soon as |X - Y| <= meet_tol and unconditionally at
    the final step; ``glue_gap`` records |X_T - Y_T| just before that final
    glue (zero for paths that met earlier).
    """
    sde.require("delta")
    _check_inside(domain, x)
    _check_inside(domain, y)
    if meet_tol is None:
        meet_tol = 1e-6 * domain.scale
    xi = xi_schedule(sde.delta, theta, grid)
    inc, single = _increments(noise)
    _check_grid(grid, inc)
    n, d, dt = inc.shape[0], sde.dim, grid.dt
    X = _start(x, n, d)
    Y = _start(y, n, d)
    if store_paths:
        xs = np.empty((n, grid.n_steps + 1, d))
        ys = np.empty_like(xs)
        xs[:, 0], ys[:, 0] = X, Y
    logR = np.zeros(n)
    met = np.linalg.norm(X - Y, axis=-1) <= meet_tol
    Y[met] = X[met]
    meeting = np.where(met, 0, -1)
    gap = np.zeros(n)
    for k in range(grid.n_steps):
        dB = inc[:, k]
        sx = sde.sigma(X)
        if np.any(np.abs(np.linalg.det(sx)) < 1e-300):
            raise ModelError(f"diffusion matrix is singular at a visited state (step {k})")
        a = _solve(sx, X - Y) / xi[k]
        a[met] = 0.0
        logR += -np.einsum("ni,ni->n", a, dB) - 0.5 * np.einsum("ni,ni->n", a, a) * dt
        xt = X + sde.b(X) * dt + np.einsum("nij,nj->ni", sx, dB)
        yt = Y + sde.b(Y) * dt + _diff_times(sde, Y, dB + a * dt)
        _guard(xt, k + 1)
        _guard(yt, k + 1)
        X, Y = domain.project(xt), domain.project(yt)
        dist = np.linalg.norm(X - Y, axis=-1)
        new = ~met & (dist <= meet_tol)
        if k == grid.n_steps - 1:
            gap = np.where(met | new, 0.0, dist)
            new = ~met
        meeting[new] = k + 1
        met = met | new
        Y[met] = X[met]
        if store_paths:
            xs[:, k + 1], ys[:, k + 1] = X, Y
    if not store_paths:
        xs, ys = X[:, None, :], Y[:, None, :]
    xs, ys, logR, met, meeting, gap = _squeeze(single, xs, ys, logR, met, meeting, gap)
    return HarnackCoupledPaths(Path(xs, grid), Path(ys, grid), logR, met, meeting, gap)


def sdel_path(sde, measure, x0, grid: TimeGrid, noise, transform: Optional[LeGallTransform] = None) -> Path:
    """Simulate the local-time equation through Y = F(X) and map back.

    ``measure`` may be a SignedMeasure or an already built LeGallTransform.
    The returned path holds X in ``states`` and Y in ``latent``.
    """
    if sde.dim != 1:
        raise ConfigurationError("local-time equations are one-dimensional")
    if transform is None:
        transform = measure if isinstance(measure, LeGallTransform) else build_transform(measure)
    ybar = transform_coefficients(sde, transform)
    y0 = transform.F(np.asarray(x0, dtype=float).reshape(1))
    yp = euler_path(ybar, y0, grid, noise)
    xs = transform.F_inverse(yp.states[..., 0])[..., None]
    return Path(xs, grid, latent=yp.states)
