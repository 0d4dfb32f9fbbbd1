"""Long statistical experiments, cached so unit and acceptance tests share one run."""

from functools import lru_cache

import numpy as np

from renhd.compensation import build_series
from renhd.core import DynamicsConfig, ExchangeConfig, ReplicaState, TemperatureLadder, build_ladder
from renhd.diagnostics import effective_sample_size, mode_coverage, tv_distance_grid
from renhd.exchange import attempt_exchange
from renhd.orchestrator import burn_in_trim, run
from renhd.targets import TabulatedTarget, five_mode_target

# Ten configurations, energies spread over [0, 3].
DB_ENERGIES = (0.0, 0.4, 0.9, 1.3, 1.6, 2.0, 2.2, 2.5, 2.8, 3.0)
DB_TEMPERATURES = (1.0, 2.0)
DB_NOISE = 0.1

FIVE_MODE_DYNAMICS = dict(epsilon=2.5e-3, c=0.1, traj_len=20)
FIVE_MODE_SEED = 11


@lru_cache(maxsize=None)
def detailed_balance(rounds=10**6, seed=0):
    """Two replicas re-drawn exactly from their marginals before every attempt.

    Returns the post-exchange joint occupancy and the product of marginals,
    both ``(K, K)``, plus the acceptance rate.
    """
    target = TabulatedTarget(DB_ENERGIES, noise_variance=DB_NOISE)
    T_j, T_k = DB_TEMPERATURES
    p_j, p_k = target.marginal(T_j), target.marginal(T_k)
    K = len(DB_ENERGIES)
    rng = np.random.default_rng(seed)
    draw_j = rng.choice(K, size=rounds, p=p_j)
    draw_k = rng.choice(K, size=rounds, p=p_k)
    density = build_series(0.2, 10, 3)
    cfg = ExchangeConfig()
    a = ReplicaState([0.0], [0.0], 0.0, T_j)
    b = ReplicaState([0.0], [0.0], 0.0, T_k)
    counts = np.zeros((K, K))
    accepted = 0
    for i in range(rounds):
        a.theta = np.array([float(draw_j[i])])
        b.theta = np.array([float(draw_k[i])])
        accepted += attempt_exchange(a, b, target, cfg, density, rng).accepted
        counts[int(a.theta[0]), int(b.theta[0])] += 1
    return counts / rounds, np.outer(p_j, p_k), accepted / rounds


@lru_cache(maxsize=None)
def five_mode_run(iterations=10**5, seed=FIVE_MODE_SEED, ladder=(1.5, 7)):
    target = five_mode_target(0.25)
    lad = build_ladder(*ladder)
    rec = run(target, lad, DynamicsConfig(**FIVE_MODE_DYNAMICS), ExchangeConfig(), iterations, seed)
    samples = burn_in_trim(rec, 0.1)
    return {
        "record": rec,
        "coverage": mode_coverage(samples, target),
        "tv": tv_distance_grid(samples, target),
        "ess": effective_sample_size(samples),
        "n": len(samples),
    }


@lru_cache(maxsize=None)
def five_mode_control(iterations=10**5, seed=FIVE_MODE_SEED, rungs=8):
    """Single replica with the same total gradient budget as ``rungs`` replicas."""
    target = five_mode_target(0.25)
    dyn = dict(FIVE_MODE_DYNAMICS, traj_len=FIVE_MODE_DYNAMICS["traj_len"] * rungs)
    rec = run(target, TemperatureLadder.single(), DynamicsConfig(**dyn), ExchangeConfig(),
              iterations, seed)
    samples = burn_in_trim(rec, 0.1)
    return {"record": rec, "coverage": mode_coverage(samples, target)}
