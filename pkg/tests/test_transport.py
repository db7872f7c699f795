import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rsdecheck.errors import ConfigurationError, StatisticsError
from rsdecheck.simulate import Path, TimeGrid
from rsdecheck.transport import (EmpiricalMeasure, bootstrap_se, ci_mean, path_d2, path_dinf,
                                 wasserstein, wasserstein_1d, wasserstein_exact, wilson_interval)


def brute_force_wp(a, b, p):
    """Minimum over all permutations: the independent oracle for the assignment solver."""
    n = a.shape[0]
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1) ** p
    best = min(cost[np.arange(n), list(perm)].sum() for perm in itertools.permutations(range(n)))
    return (best / n) ** (1 / p)


def test_exact_matches_brute_force_small():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n, d, p = rng.integers(1, 7), rng.integers(1, 4), rng.choice([1.0, 2.0])
        a, b = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        assert wasserstein_exact(a, b, p) == pytest.approx(brute_force_wp(a, b, p), rel=1e-12, abs=1e-14)


def test_1d_matches_exact():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=64), rng.exponential(size=64)
    for p in (1.0, 2.0, 3.0):
        assert abs(wasserstein_1d(a, b, p) - wasserstein_exact(a[:, None], b[:, None], p)) < 1e-10


def test_1d_closed_form_shift():
    a = np.linspace(0, 1, 50)
    assert wasserstein_1d(a, a + 0.3, 2.0) == pytest.approx(0.3)


def test_1d_unequal_sizes_use_quantiles():
    rng = np.random.default_rng(2)
    a = rng.normal(size=4000)
    b = rng.normal(size=3000)
    assert wasserstein_1d(a, b) < 0.1
    assert wasserstein_1d(a, b + 1.0) == pytest.approx(1.0, abs=0.1)


def test_dispatch():
    a = np.array([0.0, 1.0])
    assert wasserstein(a, a + 1) == pytest.approx(1.0)
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert wasserstein(pts, pts[::-1]) == 0.0


def test_errors():
    with pytest.raises(ConfigurationError):
        wasserstein_exact(np.zeros((3, 1)), np.zeros((4, 1)))
    with pytest.raises(ConfigurationError):
        wasserstein_1d([0.0], [1.0], p=0.5)
    with pytest.raises(ConfigurationError):
        wasserstein_exact(np.zeros((5000, 2)), np.zeros((5000, 2)))
    with pytest.raises(ConfigurationError):
        EmpiricalMeasure(np.array([np.nan]))


clouds = st.integers(1, 6).flatmap(lambda n: st.tuples(*[
    arrays(float, (n, 2), elements=st.floats(-10, 10, allow_nan=False)) for _ in range(3)]))


@settings(max_examples=60, deadline=None)
@given(clouds, st.sampled_from([1.0, 2.0]))
def test_metric_axioms(abc, p):
    a, b, c = abc
    ab, ba = wasserstein_exact(a, b, p), wasserstein_exact(b, a, p)
    assert ab >= 0 and wasserstein_exact(a, a, p) == 0.0
    assert ab == pytest.approx(ba, rel=1e-9, abs=1e-12)
    assert ab <= wasserstein_exact(a, c, p) + wasserstein_exact(c, b, p) + 1e-9


@settings(max_examples=60, deadline=None)
@given(arrays(float, (8, 1), elements=st.floats(-5, 5, allow_nan=False)),
       st.floats(-3, 3, allow_nan=False))
def test_translation(a, s):
    assert wasserstein_1d(a, a + s, 2.0) == pytest.approx(abs(s), abs=1e-9)


def test_path_metrics():
    g = TimeGrid(1.0, 4)
    a = Path(np.zeros((5, 1)), g)
    b = Path(np.array([[1.0], [1.0], [1.0], [1.0], [5.0]]), g)
    # left-endpoint rule ignores the last grid point
    assert path_d2(a, b) == pytest.approx(1.0)
    assert path_dinf(a, b) == 5.0
    assert path_d2(a, a) == 0.0
    with pytest.raises(ConfigurationError):
        path_d2(np.zeros((5, 1)), np.zeros((5, 1)))
    with pytest.raises(ConfigurationError):
        path_dinf(np.zeros((5, 1)), np.zeros((6, 1)))


def test_path_metric_batched():
    g = TimeGrid(1.0, 10)
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(7, 11, 2)), rng.normal(size=(7, 11, 2))
    assert path_d2(Path(a, g), Path(b, g)).shape == (7,)
    assert np.all(path_d2(Path(a, g), Path(b, g)) <= path_dinf(a, b) + 1e-12)


def test_ci_mean():
    est = ci_mean([0.0, 1.0])
    assert est.mean == 0.5 and est.std_error == pytest.approx(0.5)
    lo, hi = est.interval
    assert lo < 0.5 < hi
    with pytest.raises(StatisticsError):
        ci_mean([1.0])


def test_wilson_interval():
    lo, hi = wilson_interval(0, 100, 3.0)
    assert lo == 0.0 and 0 < hi < 0.1
    # closed form at z = 1.96, 50/100
    lo, hi = wilson_interval(50, 100, 1.96)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    with pytest.raises(StatisticsError):
        wilson_interval(0, 0)


def test_bootstrap_se_of_mean():
    rng = np.random.default_rng(3)
    x = rng.normal(size=2000)
    se = bootstrap_se(np.mean, x, n_boot=400, seed=1)
    assert se == pytest.approx(1 / math.sqrt(2000), rel=0.15)
