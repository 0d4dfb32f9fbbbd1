"""INI run-configuration files.

Sections and keys (defaults in brackets)::

    [target]    kind [five-mode]  five-mode | harmonic | gaussian-mixture | bimodal-mean
                noise_variance [0.25]
                dim [1]                           harmonic only
                means, covariances, weights       gaussian-mixture, JSON lists
                n_data [200], true_mean [1.0], likelihood_sd [1.0],
                prior_sd [10.0], data_seed [0]    bimodal-mean only
    [ladder]    tau [1.2], M [12]                 M = 0 runs a single replica at T = 1
    [dynamics]  epsilon [5e-6], c [0.1], traj_len [200], batch_size_nhd [128],
                thermostat_per_dim [true], refresh_each_trajectory [true]
    [exchange]  sigma2_star [0.2], lambda [10], n_terms [3], batch_size_re [256],
                pair_schedule [even-odd], exchange_every [1]
    [run]       iterations [1000], seed [0], burn_in [0.1], output_dir [renhd-out],
                checkpoint_every [0]
"""

from __future__ import annotations

import configparser
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from renhd.core import (
    ConfigError,
    DynamicsConfig,
    ExchangeConfig,
    TemperatureLadder,
    build_ladder,
)
from renhd.targets import (
    GaussianMixtureTarget,
    bimodal_mean_model,
    five_mode_target,
    harmonic_target,
)

TARGET_KINDS = ("five-mode", "harmonic", "gaussian-mixture", "bimodal-mean")

SCHEMA: dict[str, dict[str, type]] = {
    "target": {
        "kind": str, "noise_variance": float, "dim": int, "means": list, "covariances": list,
        "weights": list, "n_data": int, "true_mean": float, "likelihood_sd": float,
        "prior_sd": float, "data_seed": int,
    },
    "ladder": {"tau": float, "m": int},
    "dynamics": {
        "epsilon": float, "c": float, "traj_len": int, "batch_size_nhd": int,
        "thermostat_per_dim": bool, "refresh_each_trajectory": bool,
    },
    "exchange": {
        "sigma2_star": float, "lambda": float, "n_terms": int, "batch_size_re": int,
        "pair_schedule": str, "exchange_every": int,
    },
    "run": {
        "iterations": int, "seed": int, "burn_in": float, "output_dir": str,
        "checkpoint_every": int,
    },
}


class ConfigFileError(ConfigError):
    def __init__(self, field: str, message: str, line: int | None = None):
        super().__init__(field, message)
        self.line = line

    def __str__(self) -> str:
        base = super().__str__()
        return f"line {self.line}: {base}" if self.line else base


@dataclass
class RunConfig:
    target: dict
    ladder: TemperatureLadder
    dynamics: DynamicsConfig
    exchange: ExchangeConfig
    iterations: int = 1000
    seed: int = 0
    burn_in: float = 0.1
    output_dir: str = "renhd-out"
    checkpoint_every: int = 0
    source: dict = field(default_factory=dict)

    def build_target(self):
        return build_target(self.target, self.dynamics.batch_size_nhd)


def build_target(params: dict, batch_size: int = 128):
    kind = params.get("kind", "five-mode")
    noise = params.get("noise_variance", 0.25)
    if kind == "five-mode":
        return five_mode_target(noise)
    if kind == "harmonic":
        return harmonic_target(params.get("dim", 1), noise)
    if kind == "gaussian-mixture":
        if "means" not in params or "covariances" not in params:
            raise ConfigError("target.means", "gaussian-mixture needs means and covariances")
        try:
            return GaussianMixtureTarget(params["means"], params["covariances"], params.get("weights"), noise)
        except ValueError as err:
            raise ConfigError("target.covariances", str(err)) from None
    if kind == "bimodal-mean":
        return bimodal_mean_model(
            n_data=params.get("n_data", 200),
            true_mean=params.get("true_mean", 1.0),
            likelihood_sd=params.get("likelihood_sd", 1.0),
            prior_sd=params.get("prior_sd", 10.0),
            data_seed=params.get("data_seed", 0),
            batch_size=batch_size,
        )
    raise ConfigError("target.kind", f"unknown kind {kind!r}; expected one of {TARGET_KINDS}")


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict[tuple[str, str], int]:
    index, section = {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip().lower()
            index[(section, "")] = lineno
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            index[(section, m.group(1).strip().lower())] = lineno
    return index


def _convert(kind: type, raw: str, name: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw, 0)
        if kind is float:
            return float(raw)
        if kind is list:
            value = json.loads(raw)
            if not isinstance(value, list):
                raise ValueError(raw)
            return value
        return raw
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r} as {kind.__name__}") from None


def parse_config(text: str, overrides: dict[str, str] | None = None) -> RunConfig:
    """Parse and validate a configuration; ``overrides`` maps ``section.key`` to raw text."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigFileError("config", str(err).splitlines()[0], getattr(err, "lineno", None)) from None
    lines = _line_index(text)
    values: dict[str, dict] = {s: {} for s in SCHEMA}

    def fail(name: str, message: str):
        section, _, key = name.partition(".")
        line = lines.get((section, key.lower())) or lines.get((section, ""))
        raise ConfigFileError(name, message, line)

    for section in parser.sections():
        sec = section.lower()
        if sec not in SCHEMA:
            fail(sec, "unknown section")
        for key, raw in parser.items(section):
            if key not in SCHEMA[sec]:
                fail(f"{sec}.{key}", "unknown key")
            try:
                values[sec][key] = _convert(SCHEMA[sec][key], raw, f"{sec}.{key}")
            except ConfigError as err:
                fail(err.field, str(err).split(": ", 1)[1])
    for dotted, raw in (overrides or {}).items():
        sec, _, key = dotted.lower().partition(".")
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigFileError(dotted, "unknown override key")
        values[sec][key] = _convert(SCHEMA[sec][key], raw, dotted)

    try:
        lad = values["ladder"]
        M = lad.get("m", 12)
        ladder = TemperatureLadder.single() if M == 0 else build_ladder(lad.get("tau", 1.2), M)
        dyn = DynamicsConfig(**values["dynamics"])
        ex = dict(values["exchange"])
        if "lambda" in ex:
            ex["lam"] = ex.pop("lambda")
        exch = ExchangeConfig(**ex)
        r = values["run"]
        iterations = r.get("iterations", 1000)
        if iterations < 1:
            raise ConfigError("run.iterations", f"must be >= 1, got {iterations}")
        seed = r.get("seed", 0)
        if not 0 <= seed < 2**64:
            raise ConfigError("run.seed", f"must be a 64-bit unsigned integer, got {seed}")
        burn_in = r.get("burn_in", 0.1)
        if not 0 <= burn_in < 1:
            raise ConfigError("run.burn_in", f"must be in [0, 1), got {burn_in}")
        if r.get("checkpoint_every", 0) < 0:
            raise ConfigError("run.checkpoint_every", "must be >= 0")
        tgt = values["target"]
        if tgt.get("noise_variance", 0.25) < 0:
            raise ConfigError("target.noise_variance", "must be >= 0")
        cfg = RunConfig(
            target=tgt, ladder=ladder, dynamics=dyn, exchange=exch, iterations=iterations,
            seed=seed, burn_in=burn_in, output_dir=r.get("output_dir", "renhd-out"),
            checkpoint_every=r.get("checkpoint_every", 0), source=values,
        )
        cfg.build_target()
    except ConfigFileError:
        raise
    except ConfigError as err:
        fail(err.field, str(err).split(": ", 1)[1])
    return cfg


def load_config(path, overrides: dict[str, str] | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(), overrides)
