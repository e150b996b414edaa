import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ogmm_deblur.ogmm import (
    NumericalError,
    OgmmConfig,
    bilateral_term,
    bilateral_weights,
    combined_objective,
    e_step,
    m_step_centroids,
    m_step_variance,
    neighborhood,
    nll,
    q_bound,
    run_em,
    run_patch_em,
    total_energy,
)
from ogmm_deblur.patching import PatchPair


def oracle_posteriors(X, var, Y, omega):
    """Plain density ratio, no log domain."""
    M, K = len(X), len(Y)
    P = np.zeros((M, K))
    for k in range(K):
        dens = [
            (1 - omega) / M * math.exp(-((Y[k] - X[m]) ** 2) / (2 * var[m])) / math.sqrt(2 * math.pi * var[m])
            for m in range(M)
        ]
        den = sum(dens) + omega / K
        for m in range(M):
            P[m, k] = dens[m] / den
    return P


def oracle_bilateral(X, rows, cols, sigma_d, sigma_l):
    """Sum over unordered 8-connected pairs, built from pixel coordinates."""
    coords = [(r, c) for r in range(rows) for c in range(cols)]
    total = 0.0
    for i, (r1, c1) in enumerate(coords):
        for j, (r2, c2) in enumerate(coords):
            if j <= i or max(abs(r1 - r2), abs(c1 - c2)) != 1:
                continue
            d2 = (r1 - r2) ** 2 + (c1 - c2) ** 2
            diff = X[i] - X[j]
            w = math.exp(-d2 / (2 * sigma_d**2)) * math.exp(-(diff**2) / (2 * sigma_l**2))
            total += w * diff**2
    return total


# --- E-step -----------------------------------------------------------------

def test_e_step_single_component_no_outlier():
    p = e_step([0.0], [1.0], [0.0], OgmmConfig(omega=0.0))
    assert p[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_e_step_single_component_with_outlier():
    num = 0.98 * (2 * math.pi) ** -0.5
    p = e_step([0.0], [1.0], [0.0], OgmmConfig(omega=0.02))
    assert p[0, 0] == pytest.approx(num / (num + 0.02), abs=1e-12)
    assert p[0, 0] == pytest.approx(0.9513, abs=1e-3)


def test_e_step_symmetry():
    p = e_step([-7.0, 7.0], [4.0, 4.0], [0.0], OgmmConfig(omega=0.0))
    np.testing.assert_allclose(p[:, 0], [0.5, 0.5], atol=1e-15)


def test_e_step_matches_oracle(rng):
    for _ in range(50):
        M, K = rng.integers(1, 10), rng.integers(1, 26)
        X = rng.uniform(0, 255, M)
        var = rng.uniform(50, 500, M)
        Y = rng.uniform(0, 255, K)
        omega = float(rng.choice([0.0, 0.02, 0.3]))
        np.testing.assert_allclose(
            e_step(X, var, Y, OgmmConfig(omega=omega)), oracle_posteriors(X, var, Y, omega), atol=1e-10
        )


def test_e_step_survives_far_observations():
    p = e_step([0.0, 1.0], [1e-4, 1e-4], [1e6], OgmmConfig(omega=0.0))
    assert np.all(np.isfinite(p))
    assert p.sum() == pytest.approx(1.0)


def test_e_step_rejects_nan():
    with pytest.raises(ValueError):
        e_step([0.0], [1.0], [np.nan], OgmmConfig())


@settings(max_examples=80, deadline=None)
@given(
    st.integers(1, 9),
    st.integers(1, 25),
    st.floats(0.0, 0.9),
    st.floats(1e-3, 1e4),
    st.integers(0, 2**31 - 1),
)
def test_posteriors_are_probabilities(M, K, omega, var, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 255, M)
    Y = rng.uniform(0, 255, K)
    p = e_step(X, np.full(M, var), Y, OgmmConfig(omega=omega))
    assert np.all(p >= 0) and np.all(p <= 1 + 1e-12)
    s = p.sum(axis=0)
    assert np.all(s <= 1 + 1e-9)
    if omega == 0.0:
        np.testing.assert_allclose(s, 1.0, atol=1e-9)


# --- energies ---------------------------------------------------------------

def test_nll_single_gaussian():
    e = nll([3.0], [1.0], [3.0], OgmmConfig(omega=0.0))
    assert e == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-12)  # 0.9189


def test_nll_matches_oracle(rng):
    X = rng.uniform(0, 255, 9)
    var = rng.uniform(50, 500, 9)
    Y = rng.uniform(0, 255, 25)
    omega = 0.02
    expect = 0.0
    for y in Y:
        mix = sum(
            (1 - omega) / 9 * math.exp(-((y - x) ** 2) / (2 * v)) / math.sqrt(2 * math.pi * v)
            for x, v in zip(X, var)
        )
        expect -= math.log(mix + omega / 25)
    assert nll(X, var, Y, OgmmConfig(omega=omega)) == pytest.approx(expect, rel=1e-12)


def test_total_energy():
    assert total_energy([]) == 0.0
    assert total_energy([1.5, 2.5]) == 4.0


def test_bilateral_two_pixels():
    cfg = OgmmConfig(sigma_d=1.0, sigma_l=10.0)
    B = bilateral_term(np.array([0.0, 10.0]), cfg, shape=(1, 2))
    assert B == pytest.approx(100 * math.exp(-1), abs=1e-12)  # 36.79


def test_bilateral_constant_patch_is_zero():
    assert bilateral_term(np.full(9, 42.0), OgmmConfig()) == 0.0


def test_bilateral_matches_pairwise_oracle(rng):
    cfg = OgmmConfig(sigma_d=1.3, sigma_l=25.0)
    for rows, cols in [(3, 3), (5, 5), (2, 4)]:
        X = rng.uniform(0, 255, rows * cols)
        assert bilateral_term(X, cfg, shape=(rows, cols)) == pytest.approx(
            oracle_bilateral(X, rows, cols, 1.3, 25.0), rel=1e-12
        )


def test_neighborhood_counts():
    nb = neighborhood(3, 3)
    assert nb.valid.sum(axis=1).tolist() == [3, 5, 3, 5, 8, 5, 3, 5, 3]


def test_q_bound_examples():
    cfg = OgmmConfig()
    assert q_bound([0.0], [1.0], [2.0], np.array([[1.0]]), cfg) == pytest.approx(2.0)
    assert q_bound([0.0, 1.0], [3.0, 2.0], [5.0], np.zeros((2, 1)), cfg) == 0.0


def test_lambda_one_objective_is_q(rng):
    X = rng.uniform(0, 255, 9)
    var = rng.uniform(10, 100, 9)
    Y = rng.uniform(0, 255, 25)
    cfg = OgmmConfig(lam=1.0)
    post = e_step(X, var, Y, cfg)
    assert combined_objective(X, var, Y, post, cfg) == q_bound(X, var, Y, post, cfg)


# --- M-step -----------------------------------------------------------------

def test_unit_step_jumps_to_weighted_mean(rng):
    X = rng.uniform(0, 255, 9)
    Y = rng.uniform(0, 255, 25)
    cfg = OgmmConfig(lam=1.0, mu=0.0, alpha=1.0, gd_iterations=1)
    var = np.full(9, 300.0)
    post = e_step(X, var, Y, cfg)
    expect = (post * Y).sum(1) / post.sum(1)
    np.testing.assert_allclose(m_step_centroids(X, Y, post, var, cfg), expect, rtol=1e-12)


def test_fifty_steps_closed_form(rng):
    X = rng.uniform(0, 255, 9)
    Y = rng.uniform(0, 255, 25)
    cfg = OgmmConfig(lam=0.775, mu=0.0, alpha=0.1, gd_iterations=50)
    var = np.full(9, 300.0)
    post = e_step(X, var, Y, cfg)
    target = (post * Y).sum(1) / post.sum(1)
    expect = target + (X - target) * (1 - 0.1 * 0.775) ** 50
    np.testing.assert_allclose(m_step_centroids(X, Y, post, var, cfg), expect, rtol=1e-10)


def test_constant_patch_feels_no_bilateral_force(rng):
    X = np.full(9, 80.0)
    Y = rng.uniform(0, 255, 25)
    var = np.full(9, 300.0)
    with_mu = OgmmConfig(mu=5.0, gd_iterations=1)
    without = OgmmConfig(mu=0.0, gd_iterations=1)
    post = e_step(X, var, Y, with_mu)
    np.testing.assert_array_equal(
        m_step_centroids(X, Y, post, var, with_mu), m_step_centroids(X, Y, post, var, without)
    )


def test_weights_refreshed_each_step():
    # two pixels 0 and 60 with sigma_l=20: frozen weights would pull harder
    X = np.array([0.0, 60.0])
    cfg = OgmmConfig(lam=0.5, mu=1.0, alpha=0.1, gd_iterations=2, sigma_l=20.0)
    post = np.zeros((2, 1))
    out = m_step_centroids(X, np.zeros(1), post, np.ones(2), cfg, shape=(1, 2))
    x = X.copy()
    for _ in range(2):
        w = bilateral_weights(x, cfg, neighborhood(1, 2)).sum(axis=1)
        x = x - 0.1 * 1.0 * w * (x - x[::-1])
    np.testing.assert_allclose(out, x, rtol=1e-13)


def test_variance_examples():
    cfg = OgmmConfig()
    assert m_step_variance([4.0], [4.0], np.array([[1.0]]), [9.0], cfg)[0] == cfg.variance_floor
    v = m_step_variance([0.0], [1.0, 3.0], np.array([[0.5, 0.5]]), [9.0], cfg)
    assert v[0] == pytest.approx(5.0)
    assert m_step_variance([0.0], [1.0, 3.0], np.zeros((1, 2)), [9.0], cfg)[0] == 9.0


def test_variance_floor_never_undercut(rng):
    cfg = OgmmConfig(variance_floor=0.5)
    X = rng.uniform(0, 255, 9)
    Y = np.repeat(X, 3)
    post = e_step(X, np.full(9, 1e-3), Y, cfg)
    assert np.all(m_step_variance(X, Y, post, np.ones(9), cfg) >= 0.5)


# --- full EM ----------------------------------------------------------------

def test_em_zero_iterations_returns_input():
    X = np.arange(9.0) * 11
    pair = PatchPair((1, 1), X, np.zeros(25), np.zeros((9, 2), int))
    np.testing.assert_array_equal(run_patch_em(pair, OgmmConfig(em_iterations=0)), X)


def test_em_fixed_point_constant():
    X = np.full(9, 123.0)
    pair = PatchPair((1, 1), X, np.full(25, 123.0), np.zeros((9, 2), int))
    out = run_patch_em(pair, OgmmConfig(omega=0.0, mu=0.0))
    np.testing.assert_allclose(out, X, atol=1e-6)


def test_em_fixed_point_separated_levels():
    X = np.arange(9.0) * 30.0
    Y = np.repeat(X, 3)
    pair = PatchPair((1, 1), X, Y, np.zeros((9, 2), int))
    out = run_patch_em(pair, OgmmConfig(omega=0.0, mu=0.0, sigma_init=1.0))
    np.testing.assert_allclose(out, X, atol=1e-6)


def test_em_sharpens_step_edge():
    sharp = np.zeros((5, 5))
    sharp[:, 2:] = 255.0
    blurred = sharp.copy()
    blurred[:, 1:4] = [[85.0, 170.0, 255.0]]
    X = blurred[1:4, 1:4].ravel()
    target = sharp[1:4, 1:4].ravel()
    pair = PatchPair((2, 2), X, sharp.ravel(), np.zeros((9, 2), int))
    out = run_patch_em(pair, OgmmConfig())
    assert np.linalg.norm(out - target) < np.linalg.norm(X - target)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.2))
def test_em_energy_non_increasing(seed, omega):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 255, 9)
    Y = rng.choice(X, 25) + rng.normal(0, 8, 25)
    cfg = OgmmConfig(omega=omega, lam=1.0, mu=0.0, gd_iterations=200, em_iterations=6)
    e = run_em(X, Y, cfg, track_energy=True).energies
    assert np.all(np.diff(e) <= 1e-7 * np.abs(e[:-1]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-500, 500))
def test_translation_equivariance(seed, shift):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 255, 9)
    Y = rng.uniform(0, 255, 25)
    cfg = OgmmConfig(em_iterations=2, gd_iterations=10)
    a = run_em(X, Y, cfg).centroids
    b = run_em(X + shift, Y + shift, cfg).centroids
    np.testing.assert_allclose(b - shift, a, atol=1e-7)


def test_batched_equals_per_patch(rng):
    X = rng.uniform(0, 255, (6, 9))
    Y = rng.uniform(0, 255, (6, 25))
    cfg = OgmmConfig(em_iterations=2, gd_iterations=5)
    batch = run_em(X, Y, cfg)
    for i in range(6):
        one = run_em(X[i], Y[i], cfg)
        np.testing.assert_allclose(batch.centroids[i], one.centroids, rtol=1e-13)
        np.testing.assert_allclose(batch.energies[i], one.energies, rtol=1e-13)


def test_divergence_raises():
    cfg = OgmmConfig(alpha=50.0, lam=1.0, mu=0.0, gd_iterations=200, em_iterations=1)
    with pytest.raises(NumericalError), np.errstate(over="ignore", invalid="ignore"):
        run_em(np.zeros(9), np.linspace(0, 255, 25), cfg)


@pytest.mark.parametrize(
    "kw", [dict(omega=1.0), dict(lam=0.0), dict(mu=-1.0), dict(alpha=0.0), dict(sigma_init=0.0), dict(dim=3)]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OgmmConfig(**kw)
