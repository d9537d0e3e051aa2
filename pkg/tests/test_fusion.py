import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

import oracles
from divfuse.errors import DegenerateSample, NonFiniteLoss
from divfuse.features import DistributionClass
from divfuse.fusion import (
    AffineParams,
    Branch,
    FusionConfig,
    KdeModel,
    apply_affine,
    bandwidth_silverman,
    fuse,
    gaussian_closed_form,
    kde_eval,
    kl_divergence,
    kl_gradient,
    moment_summary,
    zscore_normalize,
)
from divfuse.ingest import Mixture, SynthSpec, synth_dataset

G, NG = DistributionClass.GAUSSIAN, DistributionClass.NON_GAUSSIAN
BIMODAL = Mixture((0.5, 0.5), (-2.0, 2.0), (0.5, 0.5))


def bimodal(n, seed, distortion=None):
    return synth_dataset(SynthSpec(n, BIMODAL, distortion, seed))[0]


# moments and closed form

def test_moment_summary_examples():
    m = moment_summary([0.0, 2.0])
    assert (m.mean, m.var) == (1.0, 2.0)
    with pytest.raises(DegenerateSample):
        moment_summary([1.0, 1.0, 1.0])
    big = moment_summary(np.random.default_rng(0).normal(5, 3, 10000))
    assert abs(big.mean - 5) < 0.1 and abs(big.var - 9) < 0.5


def test_closed_form_population_and_identity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(10000)
    y = 2 * rng.standard_normal(10000) + 3
    p = gaussian_closed_form(x, y)
    assert abs(p.C - 0.5) < 0.05 and abs(p.D + 1.5) < 0.1
    assert gaussian_closed_form(x, x).as_tuple() == (1.0, 0.0)


@given(seed=st.integers(0, 10_000), c=st.floats(0.1, 10), d=st.floats(-10, 10))
def test_closed_form_matches_sample_moments(seed, c, d):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(200) * 2 + 1, rng.standard_normal(300) * c + d
    p, rep = fuse(x, y, G)
    out = apply_affine(y, p)
    assert out.mean() == pytest.approx(x.mean(), abs=1e-9)
    assert out.var(ddof=1) == pytest.approx(x.var(ddof=1), rel=1e-9)
    assert rep.branch is Branch.GAUSSIAN_CLOSED_FORM and rep.iterations == 0


# affine and z-score

def test_apply_affine_examples():
    np.testing.assert_array_equal(apply_affine([1.0, 2.0], AffineParams(2, -1)), [1.0, 3.0])
    y = np.random.default_rng(2).standard_normal(50)
    np.testing.assert_array_equal(apply_affine(y, AffineParams(1, 0)), y)
    p = AffineParams(3.7, -2.2)
    np.testing.assert_allclose(apply_affine(apply_affine(y, p), p.inverse()), y, atol=1e-12)


@pytest.mark.parametrize("c, d", [(0.0, 1.0), (math.inf, 0.0), (1.0, math.nan)])
def test_affine_params_invalid(c, d):
    with pytest.raises(ValueError):
        AffineParams(c, d)


def test_zscore_examples():
    np.testing.assert_array_equal(zscore_normalize([0.0, 2.0]), [-1.0, 1.0])
    z = zscore_normalize(np.random.default_rng(3).standard_normal(100))
    np.testing.assert_allclose(zscore_normalize(z), z, atol=1e-9)
    with pytest.raises(DegenerateSample):
        zscore_normalize([4.0, 4.0])


@given(seed=st.integers(0, 10_000), c=st.floats(0.01, 100), d=st.floats(-100, 100))
def test_zscore_affine_invariant(seed, c, d):
    y = np.random.default_rng(seed).standard_normal(64)
    z = zscore_normalize(y)
    assert abs(z.mean()) < 1e-9 and abs(z.std() - 1) < 1e-9
    np.testing.assert_allclose(zscore_normalize(c * y + d), z, atol=1e-9)


# bandwidth and KDE

def test_silverman_examples():
    s = np.random.default_rng(4).standard_normal(10000)
    assert bandwidth_silverman(s) == pytest.approx(0.9 * 10000**-0.2, rel=0.2)
    assert bandwidth_silverman(10 * s) == pytest.approx(10 * bandwidth_silverman(s), rel=1e-12)
    with pytest.raises(DegenerateSample):
        bandwidth_silverman([0.0, 0.0, 0.0])


def test_kde_single_point_and_symmetry():
    assert kde_eval(KdeModel(np.array([0.0]), 1.0), 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))
    m = KdeModel(np.array([-1.0, 1.0]), 1.0)
    t = np.linspace(0, 5, 50)
    np.testing.assert_allclose(kde_eval(m, t), kde_eval(m, -t), rtol=1e-14)


@given(seed=st.integers(0, 10_000), n=st.integers(1, 30), sigma=st.floats(0.05, 3))
def test_kde_matches_loop(seed, n, sigma):
    pts = np.random.default_rng(seed).normal(0, 2, n)
    m = KdeModel(pts, sigma)
    for t in (-3.0, 0.1, 2.5):
        assert kde_eval(m, t) == pytest.approx(oracles.kde_loop(pts.tolist(), sigma, t), rel=1e-10, abs=1e-300)


def test_kde_integrates_to_one():
    rng = np.random.default_rng(5)
    m = KdeModel.fit(rng.standard_normal(300) * 2)
    grid = np.linspace(m.points.min() - 10 * m.bandwidth, m.points.max() + 10 * m.bandwidth, 10_000)
    assert integrate.trapezoid(kde_eval(m, grid), grid) == pytest.approx(1.0, abs=1e-3)


# KL estimate

def test_kl_matches_loop():
    rng = np.random.default_rng(6)
    x, y = rng.standard_normal(40), rng.normal(1, 2, 30)
    fx = KdeModel.fit(x)
    est = kl_divergence(fx, y, AffineParams(0.7, -0.3), 0.4)
    assert est == pytest.approx(oracles.kl_loop(x.tolist(), y.tolist(), 0.7, -0.3, fx.bandwidth, 0.4), rel=1e-10)


def test_kl_identical_sample_near_zero():
    x = bimodal(5000, 7)
    fx = KdeModel.fit(x)
    assert abs(kl_divergence(fx, x, AffineParams(1, 0), fx.bandwidth)) < 0.05


def test_kl_gaussian_shift():
    rng = np.random.default_rng(8)
    x, y = rng.standard_normal(5000), rng.standard_normal(5000)
    fx = KdeModel(x, 0.1)
    assert kl_divergence(fx, y, AffineParams(1, 1), 0.1) == pytest.approx(0.5, abs=0.1)


def test_kl_lower_bound_same_bandwidth():
    rng = np.random.default_rng(9)
    for _ in range(3):
        x, y = rng.standard_normal(5000), rng.standard_normal(5000)
        fx = KdeModel.fit(x)
        assert kl_divergence(fx, y, AffineParams(1, 0), fx.bandwidth) >= -0.02


# gradient

def _fd(fx, y, c, d, s, h=1e-5):
    f = lambda a, b: kl_divergence(fx, y, AffineParams(a, b), s)
    return (f(c + h, d) - f(c - h, d)) / (2 * h), (f(c, d + h) - f(c, d - h)) / (2 * h)


@given(seed=st.integers(0, 2**31), c=st.floats(0.3, 3), d=st.floats(-2, 2))
def test_gradient_matches_finite_differences(seed, c, d):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1.5, 200)
    y = rng.normal(0.5, 1, 200)
    fx = KdeModel.fit(x)
    s = bandwidth_silverman(apply_affine(y, AffineParams(c, d)))
    g = kl_gradient(fx, y, AffineParams(c, d), s)
    num = _fd(fx, y, c, d, s)
    for a, b in zip(g, num):
        assert abs(a - b) <= 1e-4 * max(abs(b), 1e-3)


def test_gradient_vanishes_at_optimum():
    x = np.linspace(-3, 3, 301)
    p, rep = fuse(x, x, NG)
    # smoothing widens f_Y, so the optimum shrinks C slightly below 1
    assert 0.9 < p.C <= 1.0 and abs(p.D) < 1e-9
    g = kl_gradient(KdeModel.fit(x), x, p, rep.bandwidth_y)
    assert math.hypot(*g) < 1e-3
    # symmetric pair: no pull on D at the identity
    assert abs(kl_gradient(KdeModel.fit(x), x, AffineParams(1, 0), rep.bandwidth_y)[1]) < 1e-12


def test_gradient_sign_translation():
    rng = np.random.default_rng(10)
    y = rng.standard_normal(500)
    x = y + 5
    fx = KdeModel.fit(x)
    # descent moves D by -dD, which must be towards 5
    for d in (3.0, 4.5):
        assert -kl_gradient(fx, y, AffineParams(1, d), fx.bandwidth)[1] > 0
    assert -kl_gradient(fx, y, AffineParams(1, 6.5), fx.bandwidth)[1] < 0


# fusion driver

def test_fuse_gaussian_branch():
    rng = np.random.default_rng(11)
    p, rep = fuse(rng.standard_normal(10000), rng.normal(3, 2, 10000), G)
    assert abs(p.C - 0.5) < 0.05 and abs(p.D + 1.5) < 0.1
    assert rep.branch is Branch.GAUSSIAN_CLOSED_FORM and rep.iterations == 0


def test_fuse_bimodal_recovery_small():
    x = bimodal(1500, 12)
    y = bimodal(1500, 13, AffineParams(0.5, -1.5))
    p, rep = fuse(x, y, NG)
    assert rep.branch is Branch.KL_DESCENT
    assert p.C == pytest.approx(2.0, rel=0.05) and p.D == pytest.approx(3.0, rel=0.05)
    assert rep.final_kl <= rep.initial_kl
    assert rep.kl_trace[0] == rep.initial_kl and rep.kl_trace[-1] == rep.final_kl


def test_fuse_identity_sample():
    x = bimodal(1000, 14)
    p, _ = fuse(x, x, NG)
    assert abs(p.C - 1) < 0.05 and abs(p.D) < 0.05 * x.std()


@pytest.mark.parametrize("seed", range(5))
def test_descent_monotone(seed):
    rng = np.random.default_rng(100 + seed)
    x = bimodal(400, seed)
    y = bimodal(400, seed + 50, AffineParams(rng.uniform(0.3, 3), rng.uniform(-3, 3)))
    _, rep = fuse(x, y, NG)
    assert np.all(np.diff(rep.kl_trace) <= 0)


def test_warm_start_optimal_on_gaussians():
    rng = np.random.default_rng(15)
    x, y = rng.standard_normal(1000), rng.normal(3, 2, 1000)
    cf = gaussian_closed_form(x, y)
    p, _ = fuse(x, y, NG)
    assert p.C == pytest.approx(cf.C, rel=0.1) and p.D == pytest.approx(cf.D, rel=0.1)


def test_equivariance():
    x = bimodal(1500, 16)
    y = bimodal(1500, 17, AffineParams(0.5, -1.5))
    p, _ = fuse(x, y, NG)
    a, b = 3.0, -2.0
    q, _ = fuse(a * x + b, a * y + b, NG)
    assert q.C == pytest.approx(p.C, rel=0.05)
    assert q.D == pytest.approx(a * p.D + b * (1 - p.C), rel=0.05)


def test_fused_kl_below_zscore_kl():
    x = bimodal(1500, 18)
    y = synth_dataset(SynthSpec(1500, Mixture((0.7, 0.3), (-2, 2), (0.5, 0.5)), AffineParams(0.5, -1.5), 19))[0]
    p, rep = fuse(x, y, NG)
    fx = KdeModel.fit(x)
    z = zscore_normalize(y) * x.std() + x.mean()
    assert rep.final_kl <= kl_divergence(fx, z, AffineParams(1, 0), rep.bandwidth_y)


def test_non_finite_without_line_search():
    x = bimodal(300, 20)
    y = bimodal(300, 21, AffineParams(0.5, -1.5))
    with pytest.raises(NonFiniteLoss):
        fuse(x, y, NG, FusionConfig(learning_rate=1e308, line_search=False))


def test_fuse_degenerate_sample():
    with pytest.raises(DegenerateSample):
        fuse(np.ones(10), np.arange(10.0), NG)


def test_report_serializes():
    x = bimodal(300, 22)
    _, rep = fuse(x, x * 2, NG)
    d = rep.to_dict()
    assert d["branch"] == "kl_descent" and len(d["kl_trace"]) == rep.iterations + 1
