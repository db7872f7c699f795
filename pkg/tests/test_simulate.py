import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsdecheck.errors import ConfigurationError, SimulationBlowup
from rsdecheck.model import (Affine, CoefficientSpec, Constant, ConvexDomain, Piecewise,
                             SignedMeasure, build_transform)
from rsdecheck.simulate import (RhoSpec, TimeGrid, euler_path, girsanov_coupled, harnack_coupled,
                                make_noise, map_paths, penalized_path, projected_path, sdel_path,
                                xi_derivative, xi_schedule)

OU = CoefficientSpec.ornstein_uhlenbeck(1.0)


def test_time_grid():
    g = TimeGrid.from_dt(1.0, 0.01)
    assert g.n_steps == 100 and g.dt == pytest.approx(0.01)
    assert g.index_of(0.5) == 50
    assert g.refined().n_steps == 200
    with pytest.raises(ConfigurationError):
        TimeGrid.from_dt(1.0, 0.3)
    with pytest.raises(ConfigurationError):
        g.index_of(0.505)


def test_noise_is_counter_based():
    g = TimeGrid(1.0, 50)
    all_ = make_noise(7, np.arange(10), g, 2).increments
    one = make_noise(7, 6, g, 2).increments
    np.testing.assert_array_equal(all_[6], one)
    assert all_.shape == (10, 50, 2)
    assert not np.array_equal(make_noise(8, 6, g, 2).increments, one)


def test_noise_variance():
    g = TimeGrid(1.0, 100)
    inc = make_noise(0, np.arange(2000), g).increments
    assert inc.var() == pytest.approx(g.dt, rel=0.02)


def test_map_paths_independent_of_workers_and_chunk():
    g = TimeGrid(1.0, 20)

    def job(idx):
        return {"x": projected_path(OU, ConvexDomain.ball([0.0], 1.0), [0.5], g,
                                    make_noise(3, idx, g)).states[:, -1, 0]}

    a = map_paths(job, 500, chunk=64, workers=1)["x"]
    b = map_paths(job, 500, chunk=64, workers=4)["x"]
    c = map_paths(job, 500, chunk=500, workers=1)["x"]
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, c)


def test_euler_ou_moments():
    # exact OU law: mean x e^{-t}, variance (1 - e^{-2t})/2
    g = TimeGrid(1.0, 200)
    p = euler_path(OU, [1.0], g, make_noise(0, np.arange(20000), g))
    xt = p.final[:, 0]
    se = xt.std() / math.sqrt(xt.size)
    assert abs(xt.mean() - math.exp(-1)) < 4 * se + 2e-3
    assert xt.var() == pytest.approx((1 - math.exp(-2)) / 2, rel=0.03)


def test_single_path_shape():
    g = TimeGrid(1.0, 10)
    p = euler_path(OU, [0.0], g, make_noise(0, 0, g))
    assert p.states.shape == (11, 1)


def test_projected_stays_inside_and_eta_points_outward():
    dom = ConvexDomain.box([-1, -1], [1, 1])
    sde = CoefficientSpec.ornstein_uhlenbeck(0.1, 2.0, dim=2)
    g = TimeGrid(1.0, 100)
    p = projected_path(sde, dom, [0.9, -0.9], g, make_noise(1, np.arange(200), g, 2))
    assert np.all(dom.contains(p.states))
    # eta increments equal penalty of the pre-projection point: nonzero only outward
    inc = p.eta_increments
    nz = np.any(inc != 0, axis=-1)
    assert nz.any()
    after = p.states[:, 1:]
    assert np.all(np.einsum("nki,nki->nk", inc, after) >= -1e-12)
    np.testing.assert_allclose(p.eta[:, -1], inc.sum(axis=1))
    assert np.all(p.eta_total_variation >= np.linalg.norm(p.eta[:, -1], axis=-1) - 1e-12)


def test_projected_rejects_outside_start():
    g = TimeGrid(1.0, 10)
    with pytest.raises(ConfigurationError):
        projected_path(OU, ConvexDomain.ball([0.0], 1.0), [2.0], g, make_noise(0, 0, g))


def test_paths_that_never_exit_have_zero_eta():
    sde = CoefficientSpec(Affine([[0.0]], [0.0]), Constant(1e-6))
    dom = ConvexDomain.interval(-1, 1)
    g = TimeGrid(1.0, 100)
    p = projected_path(sde, dom, [0.0], g, make_noise(0, np.arange(10), g))
    q = penalized_path(sde, dom, 0.05, [0.0], g.refined(4), make_noise(0, np.arange(10), g.refined(4)))
    assert np.all(p.eta_increments == 0) and np.all(q.eta_increments == 0)


def test_penalized_step_constraint():
    g = TimeGrid.from_dt(1.0, 0.05)
    with pytest.raises(ConfigurationError, match="eps/2"):
        penalized_path(OU, ConvexDomain.interval(-1, 1), 0.05, [0.0], g, make_noise(0, 0, g))


def test_penalized_approaches_projected():
    bm = CoefficientSpec(Affine([[0.0]], [0.0]), Constant(1.0))
    dom = ConvexDomain.interval(-1, 1)
    g = TimeGrid.from_dt(1.0, 0.0025)
    noise = make_noise(0, np.arange(300), g)
    ref = projected_path(bm, dom, [0.9], g, noise)
    med = []
    for eps in (0.1, 0.02, 0.005):
        pen = penalized_path(bm, dom, eps, [0.9], g, noise)
        med.append(np.median(np.max(np.abs(pen.states - ref.states)[..., 0], axis=-1)))
    assert med[0] > med[1] > med[2]


def test_blowup_reports_step():
    sde = CoefficientSpec(Affine([[400.0]], [0.0]), Constant(1.0))
    g = TimeGrid(1.0, 100)
    with pytest.raises(SimulationBlowup) as err:
        euler_path(sde, [1.0], g, make_noise(0, 0, g))
    assert err.value.step is not None and 0 < err.value.step <= 100


def test_girsanov_zero_rho_gives_identical_paths():
    g = TimeGrid(1.0, 50)
    cp = girsanov_coupled(OU, ConvexDomain.ball([0.0], 2.0), [0.3], RhoSpec.constant(0.0), g,
                          make_noise(0, np.arange(20), g))
    np.testing.assert_array_equal(cp.x_path.states, cp.y_path.states)
    assert cp.entropy == 0.0


def test_girsanov_energy_for_constant_rho():
    g = TimeGrid(2.0, 40)
    cp = girsanov_coupled(OU, ConvexDomain.ball([0.0], 2.0), [0.3], 0.5, g,
                          make_noise(0, np.arange(5), g))
    np.testing.assert_allclose(cp.rho_energy, 0.25 * 2.0)
    assert cp.entropy == pytest.approx(0.25)


def test_girsanov_shift_without_domain_is_deterministic_drift():
    # on the whole line with b = 0, X - Y = sigma * rho * t exactly
    bm = CoefficientSpec(Affine([[0.0]], [0.0]), Constant(2.0))
    g = TimeGrid(1.0, 10)
    cp = girsanov_coupled(bm, ConvexDomain.whole_space(1), [0.0], 0.5, g, make_noise(0, np.arange(3), g))
    np.testing.assert_allclose((cp.x_path.states - cp.y_path.states)[:, :, 0],
                               np.broadcast_to(g.times, (3, 11)), atol=1e-12)


@given(st.floats(0.1, 3.0), st.floats(0.05, 1.95), st.floats(0.0, 0.99))
def test_xi_identity(delta, theta, frac):
    # 2 + 2 delta xi + xi' = theta on [0, T]
    T = 1.5
    t = frac * T
    xi = (2 - theta) / (-2 * delta) * (1 - math.exp(-2 * delta * (t - T)))
    assert 2 + 2 * delta * xi + xi_derivative(delta, theta, t, T) == pytest.approx(theta, abs=1e-9)


def test_xi_schedule_values():
    g = TimeGrid(1.0, 1000)
    xi = xi_schedule(1.0, 1.0, g)
    assert xi[0] == pytest.approx((math.exp(2) - 1) / 2)
    assert np.all(xi > 0) and np.all(np.diff(xi) < 0)
    with pytest.raises(ConfigurationError):
        xi_schedule(1.0, 2.0, g)


def test_harnack_coupling_meets_and_is_unbiased():
    # free OU: E[R f(X_T)] = E f(Y^y_T), and f(x) = x gives y e^{-T}
    g = TimeGrid(1.0, 400)
    dom = ConvexDomain.whole_space(1)
    hc = harnack_coupled(OU, dom, [0.5], [-0.5], 1.0, g, make_noise(0, np.arange(20000), g),
                         store_paths=False)
    assert np.all(hc.met)
    assert np.max(hc.glue_gap) < 1e-3
    w = hc.weight
    assert abs(w.mean() - 1) < 4 * w.std() / math.sqrt(w.size)
    est = w * hc.x_path.states[:, -1, 0]
    se = est.std() / math.sqrt(est.size)
    assert abs(est.mean() - (-0.5 * math.exp(-1))) < 4 * se


def test_harnack_x_equals_y_gives_unit_weight():
    g = TimeGrid(1.0, 50)
    hc = harnack_coupled(OU, ConvexDomain.ball([0.0], 2.0), [0.2], [0.2], 1.0, g,
                         make_noise(0, np.arange(10), g))
    assert np.all(hc.log_weight == 0.0) and np.all(hc.meeting_step == 0)
    np.testing.assert_array_equal(hc.x_path.states, hc.y_path.states)


def test_sdel_path_inverts_transform():
    tr = build_transform(SignedMeasure.dirac(0.5))
    sde = CoefficientSpec(Piecewise.from_pieces([(-np.inf, -1.0, 0.0), (0.0, -3.0, 0.0)]),
                          Piecewise.from_pieces([(-np.inf, 0.0, 1.0), (0.0, 0.0, 3.0)]))
    g = TimeGrid(1.0, 100)
    p = sdel_path(sde, tr, 0.6, g, make_noise(0, np.arange(50), g))
    np.testing.assert_allclose(tr.F(p.states[..., 0]), p.latent[..., 0], atol=1e-12)
    assert p.states[0, 0, 0] == pytest.approx(0.6)


def test_skew_bm_positive_side_probability():
    # b = 0, sigma = 1, nu = beta delta_0 is skew BM: P(X_T > 0) = (1 + beta)/2 from 0.
    # Y has a discontinuous diffusion, so allow an O(sqrt(dt)) scheme bias of 0.015.
    beta = 0.5
    tr = build_transform(SignedMeasure.dirac(beta))
    sde = CoefficientSpec(Affine([[0.0]], [0.0]), Constant(1.0))
    g = TimeGrid(1.0, 1000)
    n = 10000
    p = sdel_path(sde, tr, 0.0, g, make_noise(0, np.arange(n), g))
    frac = np.mean(p.final[:, 0] > 0)
    assert abs(frac - (1 + beta) / 2) < 4 * math.sqrt(0.1875 / n) + 0.015
