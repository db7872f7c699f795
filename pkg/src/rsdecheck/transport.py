"""Empirical Wasserstein distances, path metrics and Monte Carlo statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import ndtri

from .errors import ConfigurationError, StatisticsError

ASSIGNMENT_CAP = 4096

__all__ = [
    "EmpiricalMeasure", "CiEstimate", "wasserstein_1d", "wasserstein_exact",
    "wasserstein", "path_d2", "path_dinf", "ci_mean", "wilson_interval",
    "bootstrap_se",
]


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 1:
            raise ConfigurationError("empirical measure needs an (n, d) array with n >= 1")
        if not np.all(np.isfinite(s)):
            raise ConfigurationError("empirical measure has non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]


def _measure(a):
    return a if isinstance(a, EmpiricalMeasure) else EmpiricalMeasure(a)


@dataclass(frozen=True)
class CiEstimate:
    mean: float
    std_error: float
    n: int
    level: float = 0.95

    @property
    def interval(self):
        z = float(ndtri(0.5 + self.level / 2))
        return self.mean - z * self.std_error, self.mean + z * self.std_error


def _quantile_resample(x, n):
    # order statistics matched at plotting positions k/(n+1)
    x = np.sort(x)
    if x.size == n:
        return x
    pos = np.arange(1, n + 1) / (n + 1)
    src = np.arange(1, x.size + 1) / (x.size + 1)
    return np.interp(pos, src, x)


def wasserstein_1d(a, b, p=2.0):
    """W_p between two one-dimensional empirical measures via sorted coupling."""
    if p < 1:
        raise ConfigurationError(f"W_p needs p >= 1, got {p}")
    a, b = _measure(a), _measure(b)
    if a.dim != 1 or b.dim != 1:
        raise ConfigurationError("wasserstein_1d needs one-dimensional samples")
    xa, xb = np.sort(a.samples[:, 0]), np.sort(b.samples[:, 0])
    if xa.size != xb.size:
        n = max(xa.size, xb.size)
        xa, xb = _quantile_resample(xa, n), _quantile_resample(xb, n)
    return float(np.mean(np.abs(xa - xb) ** p) ** (1.0 / p))


def wasserstein_exact(a, b, p=2.0):
    """W_p between equal-size point clouds by solving the assignment problem.

    Uses the shortest-augmenting-path solver behind
    ``scipy.optimize.linear_sum_assignment``; cubic in n, capped at 4096.
    """
    if p < 1:
        raise ConfigurationError(f"W_p needs p >= 1, got {p}")
    a, b = _measure(a), _measure(b)
    if a.n != b.n:
        raise ConfigurationError(f"sample counts differ ({a.n} vs {b.n})")
    if a.n > ASSIGNMENT_CAP:
        raise ConfigurationError(f"n={a.n} exceeds the assignment cap {ASSIGNMENT_CAP}")
    if a.dim != b.dim:
        raise ConfigurationError("point clouds live in different dimensions")
    diff = a.samples[:, None, :] - b.samples[None, :, :]
    cost = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)) ** p
    r, c = linear_sum_assignment(cost)
    return float((cost[r, c].sum() / a.n) ** (1.0 / p))


def wasserstein(a, b, p=2.0):
    """Sorted coupling in 1-D, assignment otherwise."""
    a, b = _measure(a), _measure(b)
    if a.dim == 1:
        return wasserstein_1d(a, b, p)
    return wasserstein_exact(a, b, p)


def _path_states(path):
    return path.states if hasattr(path, "states") else np.asarray(path, dtype=float)


def _same_grid(a, b):
    ga, gb = getattr(a, "grid", None), getattr(b, "grid", None)
    if ga is not None and gb is not None and ga != gb:
        raise ConfigurationError("paths live on different time grids")
    sa, sb = _path_states(a), _path_states(b)
    if sa.shape[-2] != sb.shape[-2]:
        raise ConfigurationError("paths have different numbers of grid points")
    return sa, sb, ga or gb


def path_d2(a, b, dt=None):
    """(int_0^T |a - b|^2 dt)^(1/2), left-endpoint rule; batched over leading axes."""
    sa, sb, grid = _same_grid(a, b)
    if dt is None:
        if grid is None:
            raise ConfigurationError("path_d2 needs a grid or an explicit dt")
        dt = grid.dt
    diff = sa[..., :-1, :] - sb[..., :-1, :]
    return np.sqrt(np.sum(diff * diff, axis=(-2, -1)) * dt)


def path_dinf(a, b):
    """max_k |a_k - b_k| over grid points."""
    sa, sb, _ = _same_grid(a, b)
    return np.max(np.linalg.norm(sa - sb, axis=-1), axis=-1)


def ci_mean(values, level=0.95) -> CiEstimate:
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise StatisticsError("need at least two values for a standard error")
    se = float(np.std(v, ddof=1) / np.sqrt(v.size))
    return CiEstimate(float(np.mean(v)), se, int(v.size), level)


def wilson_interval(successes, n, z=3.0):
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise StatisticsError("Wilson interval needs n >= 1")
    ph = successes / n
    den = 1.0 + z * z / n
    centre = (ph + z * z / (2 * n)) / den
    half = z * np.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def bootstrap_se(stat, *samples, n_boot=200, seed=0):
    """Bootstrap standard error of ``stat(*resampled)``; resamples each input independently."""
    rng = np.random.Generator(np.random.Philox(seed))
    vals = np.empty(n_boot)
    for i in range(n_boot):
        res = [s[rng.integers(0, len(s), len(s))] for s in samples]
        vals[i] = stat(*res)
    return float(np.std(vals, ddof=1))


def normal_quantile(level):
    return float(ndtri(level))
