"""Domain types, configuration objects and seeded random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Stream id reserved for the exchange scheduler; replicas use 0..M.
SCHEDULER_STREAM_ID = 0xFFFFFFFF


class ConfigError(ValueError):
    """Raised when a configuration value violates its constraints.

    ``field`` names the offending setting so callers (the CLI in particular)
    can point at it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class ReplicaState:
    """Dynamic variables of one replica.

    ``v`` and ``s`` are the time-step-rescaled momentum and thermostat
    (``v = p*dt``, ``s = xi*dt``). This is the only mutable domain type: it is
    owned by one worker between exchange barriers and exchanges swap ``theta``
    in place.
    """

    theta: np.ndarray
    v: np.ndarray
    s: float
    temperature: float

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        self.v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        self.s = float(self.s)
        self.temperature = float(self.temperature)
        if self.theta.size < 1:
            raise ValueError("theta must have dimension >= 1")
        if self.theta.shape != self.v.shape:
            raise ValueError(
                f"theta and v dimensions differ: {self.theta.shape} vs {self.v.shape}"
            )
        if not self.temperature >= 1.0:
            raise ValueError(f"temperature must be >= 1, got {self.temperature}")

    @property
    def dim(self) -> int:
        return self.theta.size

    def copy(self) -> ReplicaState:
        return ReplicaState(self.theta.copy(), self.v.copy(), self.s, self.temperature)


@dataclass(frozen=True)
class TemperatureLadder:
    """Geometric ladder ``[1, tau, tau**2, ..., tau**M]``.

    ``rungs == 0`` is the degenerate single-replica ladder ``[1]`` used for
    plain SGNHT baselines; build it with :meth:`single`.
    """

    tau: float
    rungs: int
    temperatures: tuple[float, ...]

    def __post_init__(self):
        if len(self.temperatures) != self.rungs + 1:
            raise ValueError("ladder must hold rungs + 1 temperatures")
        if self.temperatures[0] != 1.0:
            raise ValueError("ladder must start at temperature 1")
        if any(b <= a for a, b in zip(self.temperatures, self.temperatures[1:])):
            raise ValueError("ladder temperatures must be strictly increasing")

    @classmethod
    def single(cls) -> TemperatureLadder:
        return cls(tau=1.0, rungs=0, temperatures=(1.0,))

    def __len__(self) -> int:
        return len(self.temperatures)

    def __getitem__(self, j: int) -> float:
        return self.temperatures[j]

    def __iter__(self):
        return iter(self.temperatures)


def build_ladder(tau: float, M: int) -> TemperatureLadder:
    """Return the ladder ``T_j = tau**j`` for ``j = 0..M``."""
    if not (math.isfinite(tau) and tau > 1.0):
        raise ConfigError("ladder.tau", f"geometric factor must be > 1, got {tau}")
    if int(M) != M or M < 1:
        raise ConfigError("ladder.M", f"number of rungs must be an integer >= 1, got {M}")
    temps = tuple(float(tau) ** j for j in range(int(M) + 1))
    return TemperatureLadder(tau=float(tau), rungs=int(M), temperatures=temps)


def _positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ConfigError(name, f"must be a positive finite number, got {value}")


def _positive_int(name: str, value: int) -> None:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ConfigError(name, f"must be an integer >= 1, got {value}")


@dataclass(frozen=True)
class DynamicsConfig:
    """Integrator constants: ``epsilon = dt**2`` and ``c = C*dt``.

    Defaults are the values used for the deep-network experiments.
    ``thermostat_per_dim`` selects the ``v.v/d - T*eps`` thermostat update
    (default) over ``v.v - T*d*eps``. ``refresh_each_trajectory`` redraws
    ``v`` and resets ``s`` at the start of every trajectory.
    """

    epsilon: float = 5e-6
    c: float = 0.1
    traj_len: int = 200
    batch_size_nhd: int = 128
    thermostat_per_dim: bool = True
    refresh_each_trajectory: bool = True

    def __post_init__(self):
        _positive("dynamics.epsilon", self.epsilon)
        _positive("dynamics.c", self.c)
        _positive_int("dynamics.traj_len", self.traj_len)
        _positive_int("dynamics.batch_size_nhd", self.batch_size_nhd)


@dataclass(frozen=True)
class ExchangeConfig:
    """Exchange-protocol settings (variance threshold, bandwidth, truncation)."""

    sigma2_star: float = 0.2
    lam: float = 10.0
    n_terms: int = 3
    batch_size_re: int = 256
    pair_schedule: str = "even-odd"
    exchange_every: int = 1

    def __post_init__(self):
        _positive("exchange.sigma2_star", self.sigma2_star)
        _positive("exchange.lambda", self.lam)
        _positive_int("exchange.n_terms", self.n_terms)
        _positive_int("exchange.batch_size_re", self.batch_size_re)
        _positive_int("exchange.exchange_every", self.exchange_every)
        if self.pair_schedule not in ("even-odd", "random-adjacent"):
            raise ConfigError(
                "exchange.pair_schedule",
                f"must be 'even-odd' or 'random-adjacent', got {self.pair_schedule!r}",
            )


@dataclass(frozen=True)
class RngStream:
    """Identifies one independent random stream derived from a run seed."""

    seed: int
    stream_id: int

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("run.seed", f"must be a 64-bit unsigned integer, got {self.seed}")
        if self.stream_id < 0:
            raise ValueError("stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


def replica_rng(seed: int, j: int) -> np.random.Generator:
    return RngStream(seed, j).generator()


def scheduler_rng(seed: int) -> np.random.Generator:
    return RngStream(seed, SCHEDULER_STREAM_ID).generator()
