"""Target distributions: exact and noisy potential/force evaluations.

Every target exposes ``dim``, ``has_minibatch``, ``potential``, ``gradient``
(the force ``-grad U``), ``noisy_gradient`` and ``describe``. Synthetic targets
additionally provide ``noisy_potential`` and ``noise_variance``; mini-batch
targets provide ``n_data`` and ``potential_diff_terms``.
"""

from __future__ import annotations

import math
from typing import Callable, Protocol, runtime_checkable

import numba
import numpy as np
from scipy.special import logsumexp


@runtime_checkable
class Target(Protocol):
    dim: int
    has_minibatch: bool

    def potential(self, theta: np.ndarray) -> float: ...

    def gradient(self, theta: np.ndarray) -> np.ndarray: ...

    def noisy_gradient(
        self, theta: np.ndarray, rng: np.random.Generator, batch_size: int | None = None
    ) -> np.ndarray: ...

    def describe(self) -> dict: ...


def _check_theta(theta, dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.size != dim:
        raise ValueError(f"theta has dimension {theta.size}, expected {dim}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    return theta


@numba.njit(cache=True, nogil=True)
def mixture_force(theta, means, precisions, log_coef):
    """Force ``grad log sum_k w_k N(theta; mu_k, Sigma_k)`` for a mixture.

    ``log_coef[k]`` is ``log w_k - log((2 pi)^(d/2) |Sigma_k|^(1/2))``.
    """
    K, d = means.shape
    logp = np.empty(K)
    pulls = np.empty((K, d))
    for k in range(K):
        quad = 0.0
        for a in range(d):
            acc = 0.0
            for b in range(d):
                acc += precisions[k, a, b] * (theta[b] - means[k, b])
            pulls[k, a] = -acc
            quad += acc * (theta[a] - means[k, a])
        logp[k] = log_coef[k] - 0.5 * quad
    top = logp.max()
    total = 0.0
    for k in range(K):
        logp[k] = math.exp(logp[k] - top)
        total += logp[k]
    out = np.zeros(d)
    for k in range(K):
        r = logp[k] / total
        for a in range(d):
            out[a] += r * pulls[k, a]
    return out


@numba.njit(cache=True, nogil=True)
def mixture_log_density(theta, means, precisions, log_coef):
    K, d = means.shape
    logp = np.empty(K)
    for k in range(K):
        quad = 0.0
        for a in range(d):
            acc = 0.0
            for b in range(d):
                acc += precisions[k, a, b] * (theta[b] - means[k, b])
            quad += acc * (theta[a] - means[k, a])
        logp[k] = log_coef[k] - 0.5 * quad
    top = logp.max()
    total = 0.0
    for k in range(K):
        total += math.exp(logp[k] - top)
    return top + math.log(total)


class GaussianMixtureTarget:
    """Mixture of Gaussians with optional injected evaluation noise.

    ``noise_variance`` is added as fresh isotropic Gaussian noise to every
    call of :meth:`noisy_gradient` (per coordinate) and :meth:`noisy_potential`.
    """

    has_minibatch = False

    def __init__(self, means, covariances, weights=None, noise_variance: float = 0.0):
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        K, d = means.shape
        covs = np.asarray(covariances, dtype=np.float64)
        if covs.ndim == 2 and K == 1 and covs.shape == (d, d):
            covs = covs[None]
        if covs.shape != (K, d, d):
            raise ValueError(f"covariances must have shape {(K, d, d)}, got {covs.shape}")
        if weights is None:
            weights = np.full(K, 1.0 / K)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (K,) or np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
            raise ValueError("weights must be a probability vector with one entry per component")
        if noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        chols = []
        for k in range(K):
            if not np.allclose(covs[k], covs[k].T):
                raise ValueError(f"covariance {k} is not symmetric")
            try:
                chols.append(np.linalg.cholesky(covs[k]))
            except np.linalg.LinAlgError:
                raise ValueError(f"covariance {k} is not positive definite") from None
        self.means = means
        self.covariances = covs
        self.weights = weights
        self.noise_variance = float(noise_variance)
        self.dim = d
        self._chols = np.array(chols)
        self.precisions = np.array([np.linalg.inv(c) for c in covs])
        logdets = np.array([2.0 * np.log(np.diag(L)).sum() for L in chols])
        with np.errstate(divide="ignore"):
            self.log_coef = np.log(weights) - 0.5 * (d * np.log(2 * np.pi) + logdets)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def component_std(self) -> np.ndarray:
        """Largest per-component standard deviation (sqrt of top eigenvalue)."""
        return np.sqrt(np.array([np.linalg.eigvalsh(c).max() for c in self.covariances]))

    @property
    def is_diagonal(self) -> bool:
        off = self.covariances.copy()
        for k in range(self.n_components):
            off[k][np.diag_indices(self.dim)] = 0.0
        return not np.any(off)

    def log_density(self, theta) -> float:
        theta = _check_theta(theta, self.dim)
        return mixture_log_density(theta, self.means, self.precisions, self.log_coef)

    def log_density_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        diff = points[:, None, :] - self.means[None]
        quad = np.einsum("nka,kab,nkb->nk", diff, self.precisions, diff)
        return logsumexp(self.log_coef[None] - 0.5 * quad, axis=1)

    def potential(self, theta) -> float:
        return -self.log_density(theta)

    def gradient(self, theta) -> np.ndarray:
        theta = _check_theta(theta, self.dim)
        return mixture_force(theta, self.means, self.precisions, self.log_coef)

    def noisy_gradient(self, theta, rng, batch_size=None) -> np.ndarray:
        f = self.gradient(theta)
        if self.noise_variance > 0:
            f = f + math.sqrt(self.noise_variance) * rng.standard_normal(self.dim)
        return f

    def noisy_potential(self, theta, rng) -> float:
        u = self.potential(theta)
        if self.noise_variance > 0:
            u += math.sqrt(self.noise_variance) * rng.standard_normal()
        return u

    def fast_force_params(self):
        """Arrays consumed by the compiled trajectory kernel."""
        return self.means, self.precisions, self.log_coef

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Exact i.i.d. draws from the mixture."""
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.einsum("nab,nb->na", self._chols[comp], z)

    def describe(self) -> dict:
        return {
            "kind": "gaussian-mixture",
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "weights": self.weights.tolist(),
            "noise_variance": self.noise_variance,
        }


FIVE_MODE_ANGLES_DEG = (90.0, 162.0, 234.0, 306.0, 18.0)


def five_mode_target(
    noise_variance: float = 0.25, radius: float = 4.0, variance: float = 0.1
) -> GaussianMixtureTarget:
    """Canonical 2-D, 5-mode benchmark: equal weights, isotropic modes on a circle."""
    ang = np.deg2rad(np.array(FIVE_MODE_ANGLES_DEG))
    means = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    covs = np.repeat(variance * np.eye(2)[None], 5, axis=0)
    return GaussianMixtureTarget(means, covs, np.full(5, 0.2), noise_variance)


def harmonic_target(dim: int = 1, noise_variance: float = 0.0) -> GaussianMixtureTarget:
    """``U = |theta|^2 / 2`` (standard normal), optionally with gradient noise."""
    return GaussianMixtureTarget(np.zeros((1, dim)), np.eye(dim)[None], [1.0], noise_variance)


class MiniBatchModelTarget:
    """Bayesian posterior over a dataset, evaluated on mini-batches.

    ``log_lik(theta, xs)`` and ``grad_log_lik(theta, xs)`` are vectorised over
    the leading axis of ``xs`` and return shapes ``(n,)`` and ``(n, d)``.
    """

    has_minibatch = True

    def __init__(
        self,
        data,
        dim: int,
        log_prior: Callable,
        grad_log_prior: Callable,
        log_lik: Callable,
        grad_log_lik: Callable,
        batch_size: int = 128,
        name: str = "minibatch-model",
        params: dict | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        if len(self.data) == 0:
            raise ValueError("dataset must be non-empty")
        self.dim = int(dim)
        self.log_prior = log_prior
        self.grad_log_prior = grad_log_prior
        self.log_lik = log_lik
        self.grad_log_lik = grad_log_lik
        self.batch_size = int(batch_size)
        self.name = name
        self.params = params or {}

    @property
    def n_data(self) -> int:
        return len(self.data)

    def potential(self, theta) -> float:
        theta = _check_theta(theta, self.dim)
        return -float(self.log_prior(theta) + self.log_lik(theta, self.data).sum())

    def gradient(self, theta) -> np.ndarray:
        theta = _check_theta(theta, self.dim)
        return self.grad_log_prior(theta) + self.grad_log_lik(theta, self.data).sum(axis=0)

    def minibatch_gradient(self, theta, batch) -> np.ndarray:
        """Unbiased force estimate from the data rows indexed by ``batch``."""
        theta = _check_theta(theta, self.dim)
        batch = np.asarray(batch, dtype=np.intp).reshape(-1)
        if batch.size == 0:
            raise ValueError("mini-batch must be non-empty")
        if batch.min() < 0 or batch.max() >= self.n_data:
            raise IndexError("mini-batch index outside the dataset")
        scale = self.n_data / batch.size
        return self.grad_log_prior(theta) + scale * self.grad_log_lik(
            theta, self.data[batch]
        ).sum(axis=0)

    def next_batch(self, rng, size: int | None = None) -> np.ndarray:
        size = min(size or self.batch_size, self.n_data)
        return rng.choice(self.n_data, size=size, replace=False)

    def noisy_gradient(self, theta, rng, batch_size=None) -> np.ndarray:
        return self.minibatch_gradient(theta, self.next_batch(rng, batch_size))

    def potential_diff_terms(self, theta_a, theta_b, batch):
        """Prior log-ratio and per-datum log-likelihood ratios of ``a`` over ``b``."""
        theta_a = _check_theta(theta_a, self.dim)
        theta_b = _check_theta(theta_b, self.dim)
        xs = self.data[np.asarray(batch, dtype=np.intp)]
        prior = float(self.log_prior(theta_a) - self.log_prior(theta_b))
        terms = self.log_lik(theta_a, xs) - self.log_lik(theta_b, xs)
        return prior, terms, self.n_data

    def describe(self) -> dict:
        return {"kind": self.name, "n_data": self.n_data, **self.params}


def _norm_logpdf(x, mu, sd):
    return -0.5 * ((x - mu) / sd) ** 2 - math.log(sd) - 0.5 * math.log(2 * math.pi)


def gaussian_mean_model(data, likelihood_sd: float = 1.0, batch_size: int = 128) -> MiniBatchModelTarget:
    """Posterior of a Gaussian mean under a flat prior."""
    data = np.asarray(data, dtype=np.float64).reshape(-1)
    sd = float(likelihood_sd)
    return MiniBatchModelTarget(
        data,
        dim=1,
        log_prior=lambda th: 0.0,
        grad_log_prior=lambda th: np.zeros(1),
        log_lik=lambda th, xs: _norm_logpdf(xs, th[0], sd),
        grad_log_lik=lambda th, xs: ((xs - th[0]) / sd**2)[:, None],
        batch_size=batch_size,
        name="gaussian-mean",
        params={"likelihood_sd": sd},
    )


def bimodal_mean_model(
    n_data: int = 200,
    true_mean: float = 1.0,
    likelihood_sd: float = 1.0,
    prior_sd: float = 10.0,
    data_seed: int = 0,
    batch_size: int = 128,
) -> MiniBatchModelTarget:
    """1-D mean of a symmetric two-component mixture; the posterior has modes near +-mean.

    Each datum follows ``0.5 N(mu, s^2) + 0.5 N(-mu, s^2)``, so ``mu`` and ``-mu``
    are equally likely and the posterior is bimodal.
    """
    rng = np.random.default_rng(data_seed)
    signs = rng.choice([-1.0, 1.0], size=n_data)
    data = signs * true_mean + likelihood_sd * rng.standard_normal(n_data)
    sd, psd = float(likelihood_sd), float(prior_sd)

    def log_lik(th, xs):
        a = _norm_logpdf(xs, th[0], sd)
        b = _norm_logpdf(xs, -th[0], sd)
        return np.logaddexp(a, b) + math.log(0.5)

    def grad_log_lik(th, xs):
        a = _norm_logpdf(xs, th[0], sd)
        b = _norm_logpdf(xs, -th[0], sd)
        r = np.exp(a - np.logaddexp(a, b))
        g = r * (xs - th[0]) / sd**2 - (1 - r) * (xs + th[0]) / sd**2
        return g[:, None]

    return MiniBatchModelTarget(
        data,
        dim=1,
        log_prior=lambda th: _norm_logpdf(th[0], 0.0, psd),
        grad_log_prior=lambda th: np.array([-th[0] / psd**2]),
        log_lik=log_lik,
        grad_log_lik=grad_log_lik,
        batch_size=batch_size,
        name="bimodal-mean",
        params={
            "true_mean": true_mean,
            "likelihood_sd": sd,
            "prior_sd": psd,
            "data_seed": data_seed,
        },
    )


class TabulatedTarget:
    """Distribution over configurations ``0..K-1`` with given energies.

    ``theta`` is a length-1 vector holding the configuration index. Only the
    potential is defined; used to check exchange moves on a finite state space.
    """

    has_minibatch = False
    dim = 1

    def __init__(self, energies, noise_variance: float = 0.0):
        self.energies = np.asarray(energies, dtype=np.float64)
        self.noise_variance = float(noise_variance)

    def potential(self, theta) -> float:
        return float(self.energies[int(round(float(np.asarray(theta).reshape(-1)[0])))])

    def noisy_potential(self, theta, rng) -> float:
        u = self.potential(theta)
        if self.noise_variance > 0:
            u += math.sqrt(self.noise_variance) * rng.standard_normal()
        return u

    def marginal(self, temperature: float) -> np.ndarray:
        w = np.exp(-(self.energies - self.energies.min()) / temperature)
        return w / w.sum()

    def gradient(self, theta):
        raise NotImplementedError("tabulated targets have no gradient")

    def noisy_gradient(self, theta, rng, batch_size=None):
        raise NotImplementedError("tabulated targets have no gradient")

    def describe(self) -> dict:
        return {
            "kind": "tabulated",
            "energies": self.energies.tolist(),
            "noise_variance": self.noise_variance,
        }
