import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rsdecheck.errors import ConfigurationError, ModelError
from rsdecheck.model import (Affine, Callback, CoefficientSpec, Constant, ConvexDomain, Piecewise,
                             SignedMeasure, build_transform, check_cone_condition, eval_f_nu,
                             penalty, project, transform_coefficients, validate_dissipativity,
                             validate_ellipticity, validate_h5, validate_lipschitz)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def domains(dim):
    return st.sampled_from([
        ConvexDomain.ball(np.zeros(dim), 1.5),
        ConvexDomain.ball(np.linspace(-1, 1, dim), 0.3),
        ConvexDomain.box(-np.ones(dim), 2 * np.ones(dim)),
        ConvexDomain.halfspace(np.ones(dim) / np.sqrt(dim), 0.5),
        ConvexDomain.whole_space(dim),
    ])


@st.composite
def domain_and_points(draw, n=2):
    dim = draw(st.integers(1, 3))
    dom = draw(domains(dim))
    pts = [draw(arrays(float, dim, elements=finite)) for _ in range(n)]
    return dom, pts


# --- projection -------------------------------------------------------------

@given(domain_and_points(2))
def test_projection_is_nonexpansive(dp):
    dom, (x, y) = dp
    px, py = dom.project(x), dom.project(y)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) * (1 + 1e-12) + 1e-12


@given(domain_and_points(2))
def test_projection_variational_inequality(dp):
    # <x - P x, z - P x> <= 0 for every z in the closure
    dom, (x, z) = dp
    z = dom.project(z)
    px = dom.project(x)
    assert np.dot(x - px, z - px) <= 1e-9 * (1 + np.linalg.norm(x) ** 2 + np.linalg.norm(z) ** 2)


@given(domain_and_points(1))
def test_projection_idempotent_and_inside(dp):
    dom, (x,) = dp
    px = dom.project(x)
    assert dom.contains(px, tol=1e-9)
    np.testing.assert_allclose(dom.project(px), px, atol=1e-12)


@given(domain_and_points(2))
def test_penalty_is_monotone(dp):
    dom, (x, y) = dp
    assert np.dot(penalty(dom, x) - penalty(dom, y), x - y) >= -1e-9 * (1 + np.dot(x - y, x - y))


def test_penalty_vanishes_exactly_inside():
    dom = ConvexDomain.ball([0.0, 0.0], 1.0)
    pts = np.array([[0.0, 0.0], [0.3, -0.5], [1.0, 0.0]])
    assert np.all(dom.penalty(pts) == 0.0)


def test_projection_closed_forms():
    ball = ConvexDomain.ball([1.0, 0.0], 2.0)
    np.testing.assert_allclose(project(ball, [5.0, 0.0]), [3.0, 0.0])
    box = ConvexDomain.box([-1, -1], [1, 1])
    np.testing.assert_allclose(box.project([3.0, -0.2]), [1.0, -0.2])
    hs = ConvexDomain.halfspace([0.0, 1.0], 1.0)
    np.testing.assert_allclose(hs.project([2.0, -3.0]), [2.0, 1.0])
    np.testing.assert_allclose(hs.penalty([2.0, -3.0]), [0.0, -4.0])


def test_projection_batched_shape():
    ball = ConvexDomain.ball([0.0, 0.0, 0.0], 1.0)
    x = np.random.default_rng(0).normal(size=(4, 5, 3)) * 3
    assert ball.project(x).shape == (4, 5, 3)


def test_domain_errors():
    with pytest.raises(ConfigurationError):
        ConvexDomain.ball([0.0], -1.0)
    with pytest.raises(ConfigurationError):
        ConvexDomain.box([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(ConfigurationError):
        ConvexDomain.halfspace([1.0, 1.0], 0.0)
    with pytest.raises(ConfigurationError):
        ConvexDomain.ball([0.0, 0.0], 1.0).project([1.0, 2.0, 3.0])


def test_cone_condition_on_ball():
    # for the ball of radius r centred at 0, <x, beta(x)> = |x| |beta(x)| >= r |beta(x)|
    dom = ConvexDomain.ball([0.0, 0.0], 1.0)
    grid = np.random.default_rng(1).normal(size=(500, 2)) * 3
    assert check_cone_condition(dom, [0.0, 0.0], 1.0, grid).passed
    assert not check_cone_condition(dom, [0.0, 0.0], 1.5, grid).passed


# --- coefficients -----------------------------------------------------------

def test_coefficient_shapes():
    sde = CoefficientSpec.ornstein_uhlenbeck(1.0, 2.0, dim=3)
    x = np.ones((7, 3))
    assert sde.b(x).shape == (7, 3)
    assert sde.sigma(x).shape == (7, 3, 3)
    pw = CoefficientSpec(Piecewise.constant(0.0), Piecewise.from_pieces([(-np.inf, 0, 1), (0, 1, 1)]))
    assert pw.sigma(np.zeros((4, 1))).shape == (4, 1, 1)


def test_dimension_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        CoefficientSpec(Affine(-np.eye(2), np.zeros(2)), Constant(1.0))


def test_piecewise_right_continuous():
    p = Piecewise.from_pieces([(-np.inf, 1.0, 0.0), (0.0, 0.0, 5.0)])
    assert p.scalar(0.0) == 5.0
    assert p.scalar(-1e-12) == pytest.approx(-1e-12)


def test_require_names_missing_constants():
    sde = CoefficientSpec(Affine([[-1.0]], [0.0]), Constant(1.0))
    with pytest.raises(ConfigurationError, match="delta"):
        sde.require("delta")


def _pairs(n=300, seed=0, scale=2.0):
    return np.random.default_rng(seed).uniform(-scale, scale, size=(n, 2))


def test_dissipativity_of_ou_with_analytic_margin():
    sde = CoefficientSpec.ornstein_uhlenbeck(1.0)
    rep = validate_dissipativity(sde, _pairs())
    assert rep.passed and rep.analytic_margin == pytest.approx(0.0)
    bad = CoefficientSpec(Affine([[-1.0]], [0.0]), Constant(1.0), delta=1.5)
    rep = validate_dissipativity(bad, _pairs())
    assert not rep.passed and rep.analytic_margin == pytest.approx(-2 + 3.0)


def test_harnack_model_constants_hold():
    # sigma(x) = 1 + 0.1 clamp(x, -0.5, 0.5), drift -x
    sig = Piecewise.from_pieces([(-np.inf, 0, 0.95), (-0.5, 0.1, 1.0), (0.5, 0, 1.05)])
    sde = CoefficientSpec(Affine([[-1.0]], [0.0]), sig, delta=0.995, sigma_sup=1.05,
                          sigma_lip=0.1, ellipticity=0.81, k=0.1)
    pairs = _pairs(2000)
    assert validate_dissipativity(sde, pairs).passed
    assert validate_h5(sde, pairs).passed
    assert validate_ellipticity(sde, np.linspace(-2, 2, 101)).passed
    assert validate_lipschitz(sde, pairs, 1.0).passed
    # clamping at +-1 instead would need k = 0.2
    wide = Piecewise.from_pieces([(-np.inf, 0, 0.9), (-1.0, 0.1, 1.0), (1.0, 0, 1.1)])
    sde2 = CoefficientSpec(Affine([[-1.0]], [0.0]), wide, k=0.1)
    assert not validate_h5(sde2, pairs).passed


# --- measures and the transform --------------------------------------------

def test_measure_validation():
    with pytest.raises(ModelError):
        SignedMeasure.dirac(1.0).validate()
    with pytest.raises(ModelError):
        SignedMeasure.dirac(-1.2).validate()
    with pytest.raises(ModelError):
        SignedMeasure([1.0, 0.0], [0.1, 0.1])
    with pytest.raises(ModelError):
        SignedMeasure([0.0], [np.inf])
    with pytest.raises(ModelError):
        build_transform(SignedMeasure.dirac(1.0))


def test_f_nu_single_atom():
    nu = SignedMeasure.dirac(0.5)
    np.testing.assert_allclose(eval_f_nu(nu, [-1.0, 0.0, 2.0]), [1.0, 1 / 3, 1 / 3])


def test_example_transform_constants():
    # m = (1-beta)/(1+beta), M = 1 for nu = beta delta_0
    for beta in (0.2, 0.5, 0.9):
        tr = build_transform(SignedMeasure.dirac(beta))
        assert tr.m == pytest.approx((1 - beta) / (1 + beta), abs=1e-15)
        assert tr.M == 1.0


def test_negative_atom_swaps_extremes():
    tr = build_transform(SignedMeasure.dirac(-0.5))
    assert tr.m == 1.0 and tr.M == pytest.approx(3.0)


def test_F_closed_form_single_atom():
    tr = build_transform(SignedMeasure.dirac(0.5))
    x = np.array([-2.0, -0.1, 0.0, 0.6, 3.0])
    np.testing.assert_allclose(tr.F(x), np.where(x < 0, x, x / 3), atol=1e-15)
    assert tr.F_inverse(1.0) == pytest.approx(3.0)


def _mixed_measure():
    return SignedMeasure([-1.0, 0.5], [0.3, -0.4], cont_x=[-0.5, 0.0, 1.0], cont_g=[0.0, 0.2, -0.1])


def test_F_derivative_matches_f_nu():
    tr = build_transform(_mixed_measure())
    x = np.array([-3.0, -0.75, -0.25, 0.25, 0.7, 2.0])
    h = 1e-6
    num = (tr.F(x + h) - tr.F(x - h)) / (2 * h)
    np.testing.assert_allclose(num, eval_f_nu(tr.measure, x), rtol=1e-6)
    np.testing.assert_allclose(tr.f(x), eval_f_nu(tr.measure, x), rtol=1e-12)
    assert tr.F(0.0) == 0.0


def test_F_matches_quadrature():
    from scipy.integrate import quad
    tr = build_transform(_mixed_measure())
    f = lambda s: float(eval_f_nu(tr.measure, s))
    for x in (-2.5, -0.3, 0.8, 1.7):
        ref = quad(f, 0.0, x, points=[-1.0, -0.5, 0.0, 0.5, 1.0], limit=200)[0]
        assert tr.F(x) == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_m_M_bound_f():
    tr = build_transform(_mixed_measure())
    xs = np.linspace(-5, 5, 20001)
    fv = tr.f(xs)
    assert tr.m <= fv.min() + 1e-12 and fv.max() <= tr.M + 1e-12
    assert fv.min() == pytest.approx(tr.m, rel=1e-3) and fv.max() == pytest.approx(tr.M, rel=1e-3)


@settings(max_examples=200)
@given(st.floats(-30, 30, allow_nan=False))
def test_F_inverse_roundtrip(x):
    tr = build_transform(_mixed_measure())
    assert tr.F_inverse(tr.F(x)) == pytest.approx(x, abs=1e-9)
    y = x
    assert tr.F(tr.F_inverse(y)) == pytest.approx(y, abs=1e-9)


@given(st.floats(-0.95, 0.95), st.floats(-5, 5), st.floats(-5, 5))
def test_F_strictly_increasing(beta, a, b):
    tr = build_transform(SignedMeasure.dirac(beta, at=0.3))
    if b - a > 1e-9:
        assert tr.F(a) < tr.F(b)


def test_zero_measure_is_identity():
    tr = build_transform(SignedMeasure.zero())
    assert tr.is_identity and tr.m == tr.M == 1.0
    sde = CoefficientSpec.ornstein_uhlenbeck(1.0)
    tb = transform_coefficients(sde, tr)
    x = np.linspace(-3, 3, 11)[:, None]
    np.testing.assert_allclose(tb.b(x), sde.b(x))


def _example(delta=1.0, beta=0.5, drift_factor=None):
    r = (1 + beta) / (1 - beta)
    df = r if drift_factor is None else drift_factor
    return CoefficientSpec(Piecewise.from_pieces([(-np.inf, -delta, 0.0), (0.0, -delta * df, 0.0)]),
                           Piecewise.from_pieces([(-np.inf, 0.0, 1.0), (0.0, 0.0, r)]))


def test_example_sigma_bar_is_one():
    tr = build_transform(SignedMeasure.dirac(0.5))
    tb = transform_coefficients(_example(), tr)
    y = np.linspace(-5, 5, 1000)[:, None]
    assert np.max(np.abs(tb.sigma(y)[..., 0, 0] - 1.0)) < 1e-12


def test_continuous_drift_gives_ou_after_transform():
    # b = -delta x on both sides is what makes b_bar(y) = -delta y
    tr = build_transform(SignedMeasure.dirac(0.5))
    tb = transform_coefficients(_example(drift_factor=1.0), tr)
    y = np.linspace(-5, 5, 1000)[:, None]
    assert np.max(np.abs(tb.b(y) + y)) < 1e-12


def test_example_drift_bar_on_positive_side():
    # with the drift as printed, b_bar(y) = -3 delta y for y >= 0
    tr = build_transform(SignedMeasure.dirac(0.5))
    tb = transform_coefficients(_example(), tr)
    y = np.array([[0.5], [2.0]])
    np.testing.assert_allclose(tb.b(y), -3.0 * y)


def test_piecewise_and_callback_paths_agree():
    tr = build_transform(SignedMeasure([-0.5, 1.0], [0.3, -0.2]))
    sde = _example()
    exact = transform_coefficients(sde, tr)
    cb = CoefficientSpec(Callback(sde.b, 1), Callback(lambda x: sde.sigma(x)[..., 0], 1))
    approx = transform_coefficients(cb, tr)
    assert isinstance(exact.drift, Piecewise) and isinstance(approx.drift, Callback)
    y = np.linspace(-4, 4, 333)[:, None]
    np.testing.assert_allclose(exact.b(y), approx.b(y), atol=1e-10)
    np.testing.assert_allclose(exact.sigma(y), approx.sigma(y), atol=1e-10)
