import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renhd.core import (
    SCHEDULER_STREAM_ID,
    ConfigError,
    DynamicsConfig,
    ExchangeConfig,
    ReplicaState,
    RngStream,
    TemperatureLadder,
    build_ladder,
    replica_rng,
    scheduler_rng,
)


def test_ladder_five_mode_values():
    lad = build_ladder(1.5, 7)
    assert list(lad) == [1, 1.5, 2.25, 3.375, 5.0625, 7.59375, 11.390625, 17.0859375]


def test_ladder_two_rungs():
    assert list(build_ladder(2, 1)) == [1.0, 2.0]


def test_ladder_twelve_rungs():
    lad = build_ladder(1.2, 12)
    assert len(lad) == 13
    assert lad[-1] == pytest.approx(8.9161, abs=1e-4)


@pytest.mark.parametrize("tau", [1.0, 0.9, -2.0, float("nan"), float("inf")])
def test_ladder_rejects_bad_tau(tau):
    with pytest.raises(ConfigError) as exc:
        build_ladder(tau, 3)
    assert exc.value.field == "ladder.tau"


@pytest.mark.parametrize("M", [0, -1, 2.5])
def test_ladder_rejects_bad_m(M):
    with pytest.raises(ConfigError) as exc:
        build_ladder(1.5, M)
    assert exc.value.field == "ladder.M"


@settings(max_examples=60, deadline=None)
@given(st.floats(1.01, 3.0), st.integers(1, 20))
def test_ladder_geometric(tau, M):
    lad = build_ladder(tau, M)
    assert len(lad) == M + 1 and lad[0] == 1.0
    for a, b in zip(lad, list(lad)[1:]):
        assert b > a
        assert b / a == pytest.approx(tau, rel=1e-12)


def test_single_ladder():
    lad = TemperatureLadder.single()
    assert list(lad) == [1.0] and lad.rungs == 0


def test_ladder_invariants_enforced():
    with pytest.raises(ValueError):
        TemperatureLadder(2.0, 1, (2.0, 4.0))
    with pytest.raises(ValueError):
        TemperatureLadder(2.0, 2, (1.0, 1.0, 2.0))


def test_replica_state_checks():
    st_ = ReplicaState([0.0, 1.0], [0.0, 0.0], 0.1, 1.0)
    assert st_.dim == 2
    with pytest.raises(ValueError):
        ReplicaState([0.0, 1.0], [0.0], 0.1, 1.0)
    with pytest.raises(ValueError):
        ReplicaState([0.0], [0.0], 0.1, 0.5)
    c = st_.copy()
    c.theta[0] = 5.0
    assert st_.theta[0] == 0.0


def test_dynamics_defaults():
    cfg = DynamicsConfig()
    assert (cfg.epsilon, cfg.c, cfg.traj_len, cfg.batch_size_nhd) == (5e-6, 0.1, 200, 128)
    assert cfg.thermostat_per_dim


def test_exchange_defaults():
    cfg = ExchangeConfig()
    assert (cfg.sigma2_star, cfg.lam, cfg.n_terms, cfg.batch_size_re) == (0.2, 10.0, 3, 256)
    assert cfg.pair_schedule == "even-odd" and cfg.exchange_every == 1


@pytest.mark.parametrize("kwargs,name", [
    ({"epsilon": 0.0}, "dynamics.epsilon"),
    ({"c": -1.0}, "dynamics.c"),
    ({"traj_len": 0}, "dynamics.traj_len"),
    ({"batch_size_nhd": 0}, "dynamics.batch_size_nhd"),
])
def test_dynamics_validation(kwargs, name):
    with pytest.raises(ConfigError) as exc:
        DynamicsConfig(**kwargs)
    assert exc.value.field == name


@pytest.mark.parametrize("kwargs,name", [
    ({"sigma2_star": 0.0}, "exchange.sigma2_star"),
    ({"lam": -1.0}, "exchange.lambda"),
    ({"n_terms": 0}, "exchange.n_terms"),
    ({"pair_schedule": "all"}, "exchange.pair_schedule"),
    ({"exchange_every": 0}, "exchange.exchange_every"),
])
def test_exchange_validation(kwargs, name):
    with pytest.raises(ConfigError) as exc:
        ExchangeConfig(**kwargs)
    assert exc.value.field == name


def test_streams_deterministic_and_distinct():
    a = replica_rng(7, 0).standard_normal(5)
    assert np.array_equal(a, replica_rng(7, 0).standard_normal(5))
    assert not np.array_equal(a, replica_rng(7, 1).standard_normal(5))
    assert not np.array_equal(a, replica_rng(8, 0).standard_normal(5))
    assert not np.array_equal(a, scheduler_rng(7).standard_normal(5))
    assert RngStream(7, SCHEDULER_STREAM_ID).generator().random() == scheduler_rng(7).random()


def test_stream_independence_rough():
    x = replica_rng(1, 0).standard_normal(20000)
    y = replica_rng(1, 1).standard_normal(20000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 4 / math.sqrt(20000)
