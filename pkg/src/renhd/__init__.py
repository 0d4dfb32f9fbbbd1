"""Replica-exchange Nosé-Hoover sampling under mini-batch noise."""

from renhd.core import (
    ConfigError,
    DynamicsConfig,
    ExchangeConfig,
    ReplicaState,
    RngStream,
    TemperatureLadder,
    build_ladder,
)
from renhd.compensation import CompensationDensity, build_series
from renhd.dynamics import DivergenceError, evolve, init_replica, nh_step
from renhd.exchange import attempt_exchange, delta_e_estimate, pair_schedule
from renhd.orchestrator import RunRecord, burn_in_trim, run
from renhd.targets import GaussianMixtureTarget, MiniBatchModelTarget, five_mode_target

__version__ = "0.1.0"

__all__ = [
    "CompensationDensity",
    "ConfigError",
    "DivergenceError",
    "DynamicsConfig",
    "ExchangeConfig",
    "GaussianMixtureTarget",
    "MiniBatchModelTarget",
    "ReplicaState",
    "RngStream",
    "RunRecord",
    "TemperatureLadder",
    "attempt_exchange",
    "build_ladder",
    "build_series",
    "burn_in_trim",
    "delta_e_estimate",
    "evolve",
    "five_mode_target",
    "init_replica",
    "nh_step",
    "pair_schedule",
    "run",
]
