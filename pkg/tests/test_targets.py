import math

import numpy as np
import pytest

from renhd.targets import (
    FIVE_MODE_ANGLES_DEG,
    GaussianMixtureTarget,
    MiniBatchModelTarget,
    TabulatedTarget,
    Target,
    bimodal_mean_model,
    five_mode_target,
    gaussian_mean_model,
    harmonic_target,
)


def fd_grad_log_density(target, theta, h=1e-5):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = -(target.potential(theta + e) - target.potential(theta - e)) / (2 * h)
    return g


def rel_close(a, b, tol):
    scale = max(1.0, np.max(np.abs(b)))
    return np.max(np.abs(a - b)) <= tol * scale


def test_standard_normal_at_mode():
    t = GaussianMixtureTarget([[0.0, 0.0]], [np.eye(2)], [1.0])
    assert t.potential(np.zeros(2)) == pytest.approx(-math.log(1 / (2 * math.pi)), abs=1e-12)


def test_two_mode_far_apart():
    t = GaussianMixtureTarget([[0.0, 0.0], [50.0, 0.0]], [np.eye(2), np.eye(2)], [0.5, 0.5])
    expected = -math.log(0.5 / (2 * math.pi))
    assert t.potential(np.zeros(2)) == pytest.approx(expected, abs=1e-6)


def test_five_mode_geometry():
    t = five_mode_target()
    assert t.n_components == 5 and t.dim == 2
    assert np.allclose(t.weights, 0.2)
    assert np.allclose(np.linalg.norm(t.means, axis=1), 4.0)
    ang = np.sort(np.rad2deg(np.arctan2(t.means[:, 1], t.means[:, 0])) % 360)
    assert np.allclose(ang, np.sort(np.array(FIVE_MODE_ANGLES_DEG) % 360))
    assert np.allclose(t.covariances, 0.1 * np.eye(2))


def test_five_mode_centres_are_the_local_minima():
    t = five_mode_target(noise_variance=0.0)
    xs = np.linspace(-6, 6, 241)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    U = -t.log_density_many(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
    inner = U[1:-1, 1:-1]
    is_min = np.ones_like(inner, dtype=bool)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx or dy:
                is_min &= inner < U[1 + dx:U.shape[0] - 1 + dx, 1 + dy:U.shape[1] - 1 + dy]
    pts = np.column_stack([X[1:-1, 1:-1][is_min], Y[1:-1, 1:-1][is_min]])
    assert len(pts) == 5
    for m in t.means:
        assert np.min(np.linalg.norm(pts - m, axis=1)) < 0.06
    for m in t.means:
        assert np.allclose(t.gradient(m), 0.0, atol=1e-6)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    cov = np.array([[0.5, 0.2], [0.2, 0.3]])
    targets = [
        five_mode_target(0.0),
        harmonic_target(3),
        GaussianMixtureTarget([[0, 0], [1, 2]], [cov, 2 * np.eye(2)], [0.3, 0.7]),
    ]
    for t in targets:
        for _ in range(100):
            th = rng.uniform(-3, 3, t.dim) if t is not targets[0] else t.means[rng.integers(5)] + 0.4 * rng.standard_normal(2)
            assert rel_close(t.gradient(th), fd_grad_log_density(t, th), 1e-5)


def test_bimodal_model_gradient_matches_finite_differences():
    t = bimodal_mean_model()
    rng = np.random.default_rng(1)
    for th in rng.uniform(-2, 2, (100, 1)):
        assert rel_close(t.gradient(th), fd_grad_log_density(t, th, h=1e-6), 1e-5)


def test_noisy_gradient_statistics():
    t = five_mode_target(noise_variance=0.25)
    th = np.array([1.0, -0.5])
    rng = np.random.default_rng(3)
    draws = np.array([t.noisy_gradient(th, rng) for _ in range(100_000)])
    se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - t.gradient(th)) < 3 * se)
    assert np.allclose(draws.var(axis=0, ddof=1), 0.25, rtol=0.05)


def test_zero_noise_is_exact():
    t = five_mode_target(noise_variance=0.0)
    th = np.array([0.3, 3.9])
    assert np.array_equal(t.noisy_gradient(th, np.random.default_rng(0)), t.gradient(th))
    assert t.noisy_potential(th, np.random.default_rng(0)) == t.potential(th)


def test_symmetric_saddle():
    t = GaussianMixtureTarget([[-2.0, 0.0], [2.0, 0.0]], [np.eye(2), np.eye(2)])
    assert t.gradient(np.array([0.0, 0.7]))[0] == pytest.approx(0.0, abs=1e-15)


def test_permutation_invariance():
    means = np.array([[0.0, 1.0], [2.0, -1.0], [-3.0, 0.5]])
    covs = np.array([np.eye(2), 0.5 * np.eye(2), [[1.0, 0.3], [0.3, 2.0]]])
    w = np.array([0.2, 0.5, 0.3])
    a = GaussianMixtureTarget(means, covs, w)
    p = [2, 0, 1]
    b = GaussianMixtureTarget(means[p], covs[p], w[p])
    for th in np.random.default_rng(4).normal(size=(20, 2)):
        assert a.potential(th) == pytest.approx(b.potential(th), rel=1e-13)
        assert np.allclose(a.gradient(th), b.gradient(th), rtol=1e-12, atol=1e-14)


def test_log_density_many_agrees():
    t = five_mode_target()
    pts = np.random.default_rng(5).normal(scale=3, size=(50, 2))
    assert np.allclose(t.log_density_many(pts), [t.log_density(p) for p in pts], rtol=1e-12)


def test_direct_sampler_moments():
    t = GaussianMixtureTarget([[1.0, -1.0]], [[[1.0, 0.5], [0.5, 2.0]]])
    x = t.sample(200_000, np.random.default_rng(0))
    assert np.allclose(x.mean(axis=0), [1, -1], atol=0.02)
    assert np.allclose(np.cov(x.T), [[1, 0.5], [0.5, 2]], atol=0.03)


@pytest.mark.parametrize("bad", [[np.nan, 0.0], [np.inf, 1.0]])
def test_rejects_non_finite_theta(bad):
    with pytest.raises(ValueError):
        five_mode_target().potential(np.array(bad))


def test_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        five_mode_target().gradient(np.zeros(3))


def test_bad_mixture_inputs():
    with pytest.raises(ValueError):
        GaussianMixtureTarget([[0.0]], [[[-1.0]]])
    with pytest.raises(ValueError):
        GaussianMixtureTarget([[0.0], [1.0]], [[[1.0]], [[1.0]]], [0.9, 0.3])
    with pytest.raises(ValueError):
        GaussianMixtureTarget([[0.0]], [[[1.0]]], noise_variance=-1)


def test_protocol_membership():
    assert isinstance(five_mode_target(), Target)
    assert isinstance(bimodal_mean_model(), Target)


def test_full_batch_equals_gradient():
    t = bimodal_mean_model(n_data=50)
    th = np.array([0.4])
    assert np.array_equal(t.minibatch_gradient(th, np.arange(50)), t.gradient(th))


def test_singleton_batch():
    t = bimodal_mean_model(n_data=40)
    th = np.array([0.7])
    i = 13
    expected = t.grad_log_prior(th) + 40 * t.grad_log_lik(th, t.data[[i]])[0]
    assert np.allclose(t.minibatch_gradient(th, [i]), expected, rtol=1e-14)


def test_minibatch_unbiased():
    data = np.random.default_rng(9).normal(0.5, 1.0, 100)
    t = gaussian_mean_model(data, batch_size=10)
    th = np.array([0.0])
    rng = np.random.default_rng(10)
    draws = np.array([t.noisy_gradient(th, rng) for _ in range(10_000)])[:, 0]
    se = draws.std(ddof=1) / math.sqrt(len(draws))
    assert abs(draws.mean() - t.gradient(th)[0]) < 3 * se


def test_batches_without_replacement():
    t = bimodal_mean_model(n_data=30)
    b = t.next_batch(np.random.default_rng(0), 20)
    assert len(np.unique(b)) == 20
    assert len(t.next_batch(np.random.default_rng(0), 100)) == 30
    with pytest.raises(ValueError):
        t.minibatch_gradient(np.zeros(1), [])


def test_potential_is_negative_log_posterior():
    data = np.array([0.1, -0.3, 0.8])
    t = gaussian_mean_model(data)
    th = np.array([0.25])
    nll = -np.sum(-0.5 * (data - 0.25) ** 2 - 0.5 * math.log(2 * math.pi))
    assert t.potential(th) == pytest.approx(nll, rel=1e-13)


def test_bimodal_posterior_is_symmetric():
    t = bimodal_mean_model()
    for x in (0.3, 1.0, 1.7):
        assert t.potential(np.array([x])) == pytest.approx(t.potential(np.array([-x])), rel=1e-12)
    xs = np.linspace(0.2, 2, 181)
    u = [t.potential(np.array([x])) for x in xs]
    assert abs(xs[int(np.argmin(u))] - 1.0) < 0.3


def test_potential_diff_terms_full_batch():
    t = bimodal_mean_model(n_data=60)
    a, b = np.array([0.9]), np.array([-0.2])
    prior, terms, n = t.potential_diff_terms(a, b, np.arange(60))
    assert n == 60
    assert prior + terms.sum() == pytest.approx(t.potential(b) - t.potential(a), rel=1e-12)


def test_tabulated_target():
    t = TabulatedTarget([0.0, 1.0, 2.0])
    assert t.potential(np.array([2.0])) == 2.0
    m = t.marginal(1.0)
    assert np.allclose(m, np.exp(-np.arange(3)) / np.exp(-np.arange(3)).sum())
    with pytest.raises(NotImplementedError):
        t.gradient(np.zeros(1))


def test_custom_minibatch_model():
    t = MiniBatchModelTarget(
        np.arange(4.0), 1,
        log_prior=lambda th: 0.0, grad_log_prior=lambda th: np.zeros(1),
        log_lik=lambda th, xs: -th[0] * xs, grad_log_lik=lambda th, xs: -xs[:, None],
    )
    assert t.potential(np.array([1.0])) == pytest.approx(6.0)
    assert t.describe()["n_data"] == 4
