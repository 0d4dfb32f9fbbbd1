"""Top-level sampling loop: evolve every replica, run one exchange phase,
record the unity-temperature configuration.

Checkpoint layout (all little-endian)::

    header   "<8sI32sQQII"  magic b"RENHDCKP", version (1), sha256 of the
                            config snapshot, next iteration, exchange phase,
                            replica count R, dimension d
    R times  "<d" T, d doubles theta, d doubles v, "<d" s
    R+1 times "<QQQQII"     PCG64 state (lo, hi), increment (lo, hi),
                            has_uint32, uinteger; replicas then scheduler
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from renhd.compensation import CompensationDensity, build_series
from renhd.core import (
    DynamicsConfig,
    ExchangeConfig,
    ReplicaState,
    TemperatureLadder,
    replica_rng,
    scheduler_rng,
)
from renhd.dynamics import DivergenceError, evolve, init_replica, refresh_momentum
from renhd.exchange import ExchangeAttempt, attempt_exchange, pair_schedule

CHECKPOINT_MAGIC = b"RENHDCKP"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<8sI32sQQII")
_RNG = struct.Struct("<QQQQII")
_MASK64 = (1 << 64) - 1


@dataclass
class RunRecord:
    """Output of :func:`run`. ``samples`` rows come only from the ``T = 1`` rung."""

    samples: np.ndarray
    attempts: list[ExchangeAttempt]
    config: dict
    seed: int
    temperatures: tuple[float, ...]
    wall_time: float = 0.0
    steps: int = 0
    start_iteration: int = 0
    final_states: list[ReplicaState] = field(default_factory=list)

    @property
    def n_pairs(self) -> int:
        return len(self.temperatures) - 1

    def acceptance_by_pair(self) -> np.ndarray:
        """Acceptance fraction of each adjacent pair ``(j, j+1)``; NaN if never tried."""
        tries = np.zeros(self.n_pairs)
        hits = np.zeros(self.n_pairs)
        for a in self.attempts:
            tries[a.pair[0]] += 1
            hits[a.pair[0]] += a.accepted
        with np.errstate(invalid="ignore", divide="ignore"):
            return hits / tries

    def acceptance_rate(self) -> float:
        if not self.attempts:
            return float("nan")
        return sum(a.accepted for a in self.attempts) / len(self.attempts)


def burn_in_trim(record, fraction: float) -> np.ndarray:
    """Drop the first ``ceil(fraction * n)`` samples."""
    if not 0 <= fraction < 1:
        raise ValueError(f"burn-in fraction must be in [0, 1), got {fraction}")
    samples = record.samples if isinstance(record, RunRecord) else np.asarray(record)
    return samples[math.ceil(fraction * len(samples)):]


def config_snapshot(target, ladder: TemperatureLadder, d_cfg: DynamicsConfig,
                    x_cfg: ExchangeConfig, seed: int) -> dict:
    return {
        "target": target.describe(),
        "ladder": {"tau": ladder.tau, "M": ladder.rungs, "temperatures": list(ladder)},
        "dynamics": asdict(d_cfg),
        "exchange": asdict(x_cfg),
        "seed": int(seed),
    }


def config_hash(snapshot: dict) -> bytes:
    return hashlib.sha256(json.dumps(snapshot, sort_keys=True).encode()).digest()


def default_workers(n_replicas: int) -> int:
    cap = os.environ.get("RENHD_THREADS")
    if cap:
        try:
            return max(1, min(n_replicas, int(cap)))
        except ValueError:
            pass
    return n_replicas


@dataclass
class Checkpoint:
    config_hash: bytes
    iteration: int
    phase: int
    states: list[ReplicaState]
    rng_states: list[dict]


def _pack_rng(gen: np.random.Generator) -> bytes:
    st = gen.bit_generator.state
    s, inc = st["state"]["state"], st["state"]["inc"]
    return _RNG.pack(s & _MASK64, s >> 64, inc & _MASK64, inc >> 64,
                     st["has_uint32"], st["uinteger"])


def _unpack_rng(buf: bytes) -> dict:
    slo, shi, ilo, ihi, has, uint = _RNG.unpack(buf)
    return {
        "bit_generator": "PCG64",
        "state": {"state": slo | (shi << 64), "inc": ilo | (ihi << 64)},
        "has_uint32": has,
        "uinteger": uint,
    }


def save_checkpoint(path, states, rngs, sched, iteration: int, phase: int, chash: bytes) -> None:
    d = states[0].dim
    parts = [_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, chash, iteration, phase,
                          len(states), d)]
    for st in states:
        parts.append(struct.pack("<d", st.temperature))
        parts.append(st.theta.astype("<f8").tobytes())
        parts.append(st.v.astype("<f8").tobytes())
        parts.append(struct.pack("<d", st.s))
    parts.extend(_pack_rng(g) for g in (*rngs, sched))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, chash, iteration, phase, R, d = _HEADER.unpack_from(buf, 0)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    expected = _HEADER.size + R * 8 * (2 * d + 2) + (R + 1) * _RNG.size
    if len(buf) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(buf)}")
    off = _HEADER.size
    states = []
    for _ in range(R):
        vals = np.frombuffer(buf, dtype="<f8", count=2 * d + 2, offset=off).astype(np.float64)
        off += 8 * (2 * d + 2)
        states.append(ReplicaState(vals[1:1 + d], vals[1 + d:1 + 2 * d], vals[-1], vals[0]))
    rng_states = []
    for _ in range(R + 1):
        rng_states.append(_unpack_rng(buf[off:off + _RNG.size]))
        off += _RNG.size
    return Checkpoint(chash, iteration, phase, states, rng_states)


def _restore(gen: np.random.Generator, state: dict) -> np.random.Generator:
    gen.bit_generator.state = state
    return gen


def run(
    target,
    ladder: TemperatureLadder,
    d_cfg: DynamicsConfig,
    x_cfg: ExchangeConfig,
    iterations: int,
    seed: int,
    *,
    workers: int | None = None,
    density: CompensationDensity | None = None,
    checkpoint_path=None,
    checkpoint_every: int = 0,
    resume: Checkpoint | None = None,
    progress=None,
) -> RunRecord:
    """Run ``iterations`` rounds of evolve-all / exchange / record.

    A single-temperature ladder never exchanges and reduces to a plain
    thermostatted stochastic-gradient sampler. Divergence errors are re-raised
    tagged with replica index and iteration.
    """
    R = len(ladder)
    d = target.dim
    snapshot = config_snapshot(target, ladder, d_cfg, x_cfg, seed)
    chash = config_hash(snapshot)
    if R > 1 and density is None:
        density = build_series(x_cfg.sigma2_star, x_cfg.lam, x_cfg.n_terms)

    rngs = [replica_rng(seed, j) for j in range(R)]
    sched = scheduler_rng(seed)
    if resume is not None:
        if resume.config_hash != chash:
            raise ValueError("checkpoint was written for a different configuration")
        if len(resume.states) != R or resume.states[0].dim != d:
            raise ValueError("checkpoint ensemble shape does not match the run")
        states = [s.copy() for s in resume.states]
        for g, st in zip((*rngs, sched), resume.rng_states):
            _restore(g, st)
        start, phase = resume.iteration, resume.phase
    else:
        states = [init_replica(T, d_cfg, d, rngs[j]) for j, T in enumerate(ladder)]
        start, phase = 0, 0

    def advance(j: int) -> ReplicaState:
        st = states[j]
        if d_cfg.refresh_each_trajectory and it > 0:
            st = refresh_momentum(st, d_cfg, rngs[j])
        try:
            return evolve(st, target, d_cfg, rngs[j])
        except DivergenceError as err:
            raise err.tagged(j, it) from None

    n_workers = workers or default_workers(R)
    pool = ThreadPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    samples = np.empty((max(iterations - start, 0), d))
    attempts: list[ExchangeAttempt] = []
    t0 = time.perf_counter()
    try:
        for it in range(start, iterations):
            if pool is None:
                states = [advance(j) for j in range(R)]
            else:
                states = list(pool.map(advance, range(R)))
            if R > 1 and (it + 1) % x_cfg.exchange_every == 0:
                for j, k in pair_schedule(R, phase, x_cfg.pair_schedule, sched):
                    attempts.append(attempt_exchange(states[j], states[k], target, x_cfg,
                                                     density, sched, pair=(j, k), phase=phase))
                phase += 1
            samples[it - start] = states[0].theta
            if checkpoint_path and checkpoint_every and (it + 1) % checkpoint_every == 0:
                save_checkpoint(checkpoint_path, states, rngs, sched, it + 1, phase, chash)
            if progress is not None:
                progress(it + 1)
    finally:
        if pool is not None:
            pool.shutdown()

    return RunRecord(
        samples=samples,
        attempts=attempts,
        config=snapshot,
        seed=int(seed),
        temperatures=tuple(ladder),
        wall_time=time.perf_counter() - t0,
        steps=(iterations - start) * R * d_cfg.traj_len,
        start_iteration=start,
        final_states=states,
    )
