"""Discrete stochastic Nosé-Hoover integrator for a single replica.

One step, in rescaled variables ``v = p*dt``, ``s = xi*dt``::

    v     <- v + f*eps - s*v + N(0, 2*c*eps)
    theta <- theta + v
    s     <- s + (v.v/d - T*eps)          # uses the updated v

Targets exposing ``fast_force_params`` (Gaussian mixtures) run whole
trajectories in a compiled kernel; it draws the same random numbers in the
same order as the step-by-step path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from renhd.core import DynamicsConfig, ReplicaState
from renhd.targets import mixture_force


class DivergenceError(RuntimeError):
    """A trajectory produced a non-finite state."""

    def __init__(self, step: int, replica: int | None = None, iteration: int | None = None):
        self.step = step
        self.replica = replica
        self.iteration = iteration
        where = f"step {step}"
        if replica is not None:
            where = f"replica {replica}, " + where
        if iteration is not None:
            where = f"iteration {iteration}, " + where
        super().__init__(f"non-finite state at {where}")

    def tagged(self, replica: int, iteration: int) -> DivergenceError:
        return DivergenceError(self.step, replica, iteration)


@dataclass
class ThermostatTrace:
    """Append-only record of ``(step, s, v.v/d)``."""

    steps: list[int] = field(default_factory=list)
    s: list[float] = field(default_factory=list)
    kinetic: list[float] = field(default_factory=list)

    def append(self, step: int, s: float, kinetic: float) -> None:
        self.steps.append(int(step))
        self.s.append(float(s))
        self.kinetic.append(float(kinetic))

    def __len__(self) -> int:
        return len(self.steps)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "s", "kinetic"])
            for row in zip(self.steps, self.s, self.kinetic):
                w.writerow([row[0], repr(row[1]), repr(row[2])])


def init_replica(T: float, cfg: DynamicsConfig, d: int, rng, theta=None) -> ReplicaState:
    """Fresh replica at temperature ``T``: ``v ~ N(0, T*eps)``, ``s = c/T``.

    ``theta`` defaults to a standard-normal draw taken from ``rng`` before ``v``.
    """
    if T < 1:
        raise ValueError(f"temperature must be >= 1, got {T}")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if theta is None:
        theta = rng.standard_normal(d)
    v = math.sqrt(T * cfg.epsilon) * rng.standard_normal(d)
    return ReplicaState(np.array(theta, dtype=np.float64), v, cfg.c / T, T)


def refresh_momentum(state: ReplicaState, cfg: DynamicsConfig, rng) -> ReplicaState:
    """Redraw ``v`` and reset ``s`` while keeping ``theta``."""
    return init_replica(state.temperature, cfg, state.dim, rng, theta=state.theta)


def _step(theta, v, s, T, f, eps, noise_sd, z, per_dim):
    v = v + f * eps - s * v + noise_sd * z
    theta = theta + v
    kin = float(np.dot(v, v))
    if per_dim:
        s = s + (kin / v.size - T * eps)
    else:
        s = s + (kin - T * v.size * eps)
    return theta, v, s


def nh_step(state: ReplicaState, f_tilde, cfg: DynamicsConfig, rng) -> ReplicaState:
    """Advance one step with force estimate ``f_tilde``; draws exactly ``d`` normals."""
    f = np.asarray(f_tilde, dtype=np.float64).reshape(-1)
    if f.size != state.dim:
        raise ValueError(f"force has dimension {f.size}, expected {state.dim}")
    z = rng.standard_normal(state.dim)
    theta, v, s = _step(
        state.theta, state.v, state.s, state.temperature, f,
        cfg.epsilon, math.sqrt(2.0 * cfg.c * cfg.epsilon), z, cfg.thermostat_per_dim,
    )
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(v)) and np.all(np.isfinite(theta))
            and math.isfinite(s)):
        raise DivergenceError(0)
    return ReplicaState(theta, v, s, state.temperature)


@numba.njit(cache=True, nogil=True)
def _mixture_trajectory(theta, v, s, T, eps, noise_sd, grad_sd, per_dim, noise,
                        means, precisions, log_coef, trace_s, trace_k, path):
    n_steps = noise.shape[0]
    last = noise.shape[1] - 1
    d = theta.size
    record = trace_s.size > 0
    keep_path = path.shape[0] > 0
    for n in range(n_steps):
        f = mixture_force(theta, means, precisions, log_coef)
        if last == 1:
            f = f + grad_sd * noise[n, 0]
        v = v + f * eps - s * v + noise_sd * noise[n, last]
        theta = theta + v
        kin = np.dot(v, v)
        if per_dim:
            s = s + (kin / d - T * eps)
        else:
            s = s + (kin - T * d * eps)
        if record:
            trace_s[n] = s
            trace_k[n] = kin / d
        if keep_path:
            path[n] = theta
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(theta)) and np.isfinite(s)):
            return theta, v, s, n
    return theta, v, s, -1


def evolve(state: ReplicaState, target, cfg: DynamicsConfig, rng,
           n_steps: int | None = None, trace: ThermostatTrace | None = None,
           path: np.ndarray | None = None, fast: bool = True) -> ReplicaState:
    """Run ``cfg.traj_len`` (or ``n_steps``) noisy-force integrator steps.

    ``path``, if given, is an ``(N, d)`` array filled with ``theta`` after each
    step. Raises :class:`DivergenceError` carrying the failing step index.
    """
    N = cfg.traj_len if n_steps is None else int(n_steps)
    if N == 0:
        return state.copy()
    if path is not None and path.shape != (N, state.dim):
        raise ValueError(f"path must have shape {(N, state.dim)}")
    eps, T = cfg.epsilon, state.temperature
    noise_sd = math.sqrt(2.0 * cfg.c * eps)
    start = len(trace.steps) if trace is not None else 0

    params = getattr(target, "fast_force_params", None)
    if fast and params is not None:
        grad_var = target.noise_variance
        noise = rng.standard_normal((N, 2 if grad_var > 0 else 1, state.dim))
        ts = np.empty(N if trace is not None else 0)
        tk = np.empty_like(ts)
        theta, v, s, bad = _mixture_trajectory(
            state.theta.copy(), state.v.copy(), state.s, T, eps, noise_sd,
            math.sqrt(grad_var), cfg.thermostat_per_dim, noise, *params(), ts, tk,
            path if path is not None else np.empty((0, state.dim)),
        )
        if trace is not None:
            stop = N if bad < 0 else bad + 1
            for n in range(stop):
                trace.append(start + n, ts[n], tk[n])
        if bad >= 0:
            raise DivergenceError(bad)
        return ReplicaState(theta, v, s, T)

    theta, v, s = state.theta, state.v, state.s
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(N):
            f = target.noisy_gradient(theta, rng, batch_size=cfg.batch_size_nhd)
            z = rng.standard_normal(state.dim)
            theta, v, s = _step(theta, v, s, T, f, eps, noise_sd, z, cfg.thermostat_per_dim)
            if trace is not None:
                trace.append(start + n, s, float(np.dot(v, v)) / v.size)
            if path is not None:
                path[n] = theta
            if not (np.all(np.isfinite(v)) and np.all(np.isfinite(theta)) and math.isfinite(s)):
                raise DivergenceError(n)
    return ReplicaState(theta, v, s, T)
