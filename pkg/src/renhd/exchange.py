"""Replica-exchange protocol with a noise-aware Barker test.

A swap of ``(theta_j, theta_k)`` is accepted when ``z_C + z_N* + dE > 0``:
``dE`` is the (noisy) tempered potential difference, ``z_N*`` tops its
variance up to ``sigma2_star`` and ``z_C`` comes from the compensation
density built for ``sigma2_star``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from renhd.compensation import CompensationDensity
from renhd.core import ExchangeConfig, ReplicaState


@dataclass
class ExchangeAttempt:
    pair: tuple[int, int]
    delta_E_tilde: float
    var_estimate: float
    batch_used: int
    accepted: bool
    z_C: float
    z_N_star: float
    phase: int = -1

    def to_json(self) -> dict:
        out = asdict(self)
        out["pair"] = list(self.pair)
        return out

    @classmethod
    def from_json(cls, data: dict) -> ExchangeAttempt:
        data = dict(data)
        data["pair"] = tuple(data["pair"])
        return cls(**data)


def inverse_temperature_gap(T_j: float, T_k: float) -> float:
    if T_j == T_k:
        raise ValueError("exchange needs two distinct temperatures")
    return 1.0 / T_j - 1.0 / T_k


def delta_e_estimate(theta_j, theta_k, T_j, T_k, target, batch=None, rng=None, repeats: int = 1):
    """Estimate ``dE = (U(theta_j) - U(theta_k)) (1/T_j - 1/T_k)`` and its variance.

    Mini-batch targets use the rows in ``batch``; the variance is the scaled
    sample variance of the per-datum terms with finite-population correction,
    so the full dataset gives zero. Targets with injected potential noise
    average ``repeats`` noisy evaluations per side and report the known
    variance. Anything else is evaluated exactly.
    """
    c_T = inverse_temperature_gap(T_j, T_k)
    if getattr(target, "has_minibatch", False):
        if batch is None:
            raise ValueError("mini-batch targets need a batch")
        batch = np.asarray(batch, dtype=np.intp).reshape(-1)
        S = batch.size
        if S < 2:
            raise ValueError("batch must hold at least 2 points to estimate a variance")
        prior, terms, n = target.potential_diff_terms(theta_k, theta_j, batch)
        delta = c_T * (prior + n / S * terms.sum())
        fpc = 1.0 - S / n
        var = c_T**2 * (n**2 / S) * terms.var(ddof=1) * fpc if fpc > 0 else 0.0
        return float(delta), float(var)

    noise_var = getattr(target, "noise_variance", 0.0)
    if noise_var > 0:
        if rng is None:
            raise ValueError("noisy targets need an rng")
        u_j = sum(target.noisy_potential(theta_j, rng) for _ in range(repeats)) / repeats
        u_k = sum(target.noisy_potential(theta_k, rng) for _ in range(repeats)) / repeats
        return float(c_T * (u_j - u_k)), float(c_T**2 * 2.0 * noise_var / repeats)
    return float(c_T * (target.potential(theta_j) - target.potential(theta_k))), 0.0


def attempt_exchange(
    state_j: ReplicaState,
    state_k: ReplicaState,
    target,
    x_cfg: ExchangeConfig,
    density: CompensationDensity,
    rng: np.random.Generator,
    pair: tuple[int, int] = (0, 1),
    phase: int = -1,
) -> ExchangeAttempt:
    """One exchange attempt; on acceptance ``theta`` is swapped in place.

    Momenta and thermostats stay with their rungs.
    """
    sigma2_star = x_cfg.sigma2_star
    if not math.isclose(density.sigma2, sigma2_star, rel_tol=1e-12):
        raise ValueError(
            f"compensation density built for sigma2={density.sigma2}, "
            f"exchange uses sigma2_star={sigma2_star}"
        )
    T_j, T_k = state_j.temperature, state_k.temperature

    if getattr(target, "has_minibatch", False):
        n = target.n_data
        order = rng.permutation(n)
        size = min(max(2, x_cfg.batch_size_re), n)
        while True:
            delta, var = delta_e_estimate(state_j.theta, state_k.theta, T_j, T_k, target,
                                          batch=order[:size])
            if var < sigma2_star:
                break
            if size >= n:
                var = 0.0
                break
            size = min(size + x_cfg.batch_size_re, n)
        used = size
    else:
        noise_var = getattr(target, "noise_variance", 0.0)
        repeats = 1
        if noise_var > 0:
            c_T = inverse_temperature_gap(T_j, T_k)
            repeats = int(math.floor(c_T**2 * 2.0 * noise_var / sigma2_star)) + 1
        delta, var = delta_e_estimate(state_j.theta, state_k.theta, T_j, T_k, target,
                                      rng=rng, repeats=repeats)
        used = repeats

    z_n = math.sqrt(max(sigma2_star - var, 0.0)) * rng.standard_normal()
    z_c = density.sample(rng)
    accepted = z_c + z_n + delta > 0
    if accepted:
        state_j.theta, state_k.theta = state_k.theta, state_j.theta
    return ExchangeAttempt(tuple(pair), delta, var, int(used), bool(accepted), z_c, z_n, phase)


def pair_schedule(n_replicas: int, phase: int, kind: str = "even-odd", rng=None) -> list[tuple[int, int]]:
    """Disjoint adjacent pairs to attempt in one exchange phase.

    ``"even-odd"`` alternates ``(0,1),(2,3),...`` and ``(1,2),(3,4),...`` by
    phase parity; ``"random-adjacent"`` picks the parity from ``rng``.
    """
    if n_replicas < 2:
        raise ValueError("need at least two replicas to exchange")
    if kind == "even-odd":
        start = phase % 2
    elif kind == "random-adjacent":
        if rng is None:
            raise ValueError("random-adjacent schedule needs an rng")
        start = int(rng.integers(2))
    else:
        raise ValueError(f"unknown pair schedule {kind!r}")
    return [(j, j + 1) for j in range(start, n_replicas - 1, 2)]
