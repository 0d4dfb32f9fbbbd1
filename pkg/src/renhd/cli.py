"""``renhd`` command line: run, analyze, check-deconv.

Exit codes: 0 ok, 1 configuration error, 2 divergence, 3 I/O or schema
error, 4 deconvolution error above the regression threshold.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from renhd.compensation import (
    RECONSTRUCTION_THRESHOLD,
    CompensationWarning,
    build_series,
    convolve_gaussian,
    reconstruct,
)
from renhd.config import RunConfig, load_config
from renhd.core import ConfigError
from renhd.diagnostics import default_grid, analytic_cell_masses, histogram_masses, report
from renhd.dynamics import DivergenceError
from renhd.exchange import ExchangeAttempt
from renhd.orchestrator import burn_in_trim, load_checkpoint, run
from renhd.targets import GaussianMixtureTarget

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO, EXIT_THRESHOLD = 0, 1, 2, 3, 4
CHECKPOINT_NAME = "checkpoint.bin"
HIST_BINS = 50


class SchemaError(ValueError):
    pass


def _err(msg: str) -> None:
    print(f"renhd: {msg}", file=sys.stderr)


def _parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError("--set", f"expected section.key=value, got {item!r}")
        out[key.strip()] = value
    return out


def _sample_header(d: int) -> list[str]:
    return ["iter"] + [f"theta_{i}" for i in range(d)]


def write_samples(path: Path, samples: np.ndarray, start: int = 0) -> None:
    d = samples.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join(_sample_header(d)) + "\n")
        for i, row in enumerate(samples):
            fh.write(f"{start + i}," + ",".join(format(x, ".17g") for x in row) + "\n")


def read_samples(path: Path, d: int) -> np.ndarray:
    """Strict reader; raises :class:`SchemaError` naming the offending row."""
    with open(path, newline="") as fh:
        lines = fh.readlines()
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].rstrip("\r\n").split(",")
    if header != _sample_header(d):
        raise SchemaError(f"{path}: header {header} does not match a {d}-dimensional target")
    rows = []
    for n, line in enumerate(lines[1:], start=1):
        # every row we write is newline-terminated; a bare tail means a cut-off file
        if not line.endswith("\n"):
            raise SchemaError(f"{path}: row {n} is truncated")
        rec = line.rstrip("\r\n").split(",")
        if len(rec) != d + 1:
            raise SchemaError(f"{path}: row {n} has {len(rec)} fields, expected {d + 1}")
        try:
            it = int(rec[0])
            vals = [float(x) for x in rec[1:]]
        except ValueError:
            raise SchemaError(f"{path}: row {n} is not numeric") from None
        if it != n - 1:
            raise SchemaError(f"{path}: row {n} has iteration {it}, expected {n - 1}")
        rows.append(vals)
    return np.array(rows, dtype=np.float64).reshape(-1, d)


def read_attempts(path: Path) -> list[ExchangeAttempt]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(ExchangeAttempt.from_json(json.loads(line)))
            except (ValueError, TypeError, KeyError):
                raise SchemaError(f"{path}: line {n} is not a valid exchange attempt") from None
    return out


def acceptance_by_pair(attempts, n_pairs: int) -> tuple[list[float], float | None]:
    tries, hits = np.zeros(n_pairs), np.zeros(n_pairs)
    for a in attempts:
        if not 0 <= a.pair[0] < n_pairs:
            raise SchemaError(f"exchange pair {a.pair} outside a ladder of {n_pairs + 1}")
        tries[a.pair[0]] += 1
        hits[a.pair[0]] += a.accepted
    with np.errstate(invalid="ignore", divide="ignore"):
        by_pair = hits / tries
    overall = float(hits.sum() / tries.sum()) if tries.sum() else None
    return by_pair, overall


def _report_dict(samples, cfg: RunConfig, target, attempts) -> dict:
    kept = burn_in_trim(samples, cfg.burn_in)
    by_pair, overall = acceptance_by_pair(attempts, len(cfg.ladder) - 1)
    rep = report(kept, target, by_pair, overall)
    out = rep.to_json()
    out["burn_in"] = cfg.burn_in
    out["temperatures"] = list(cfg.ladder)
    return out


def cmd_run(config_path, overrides=None, output_dir=None, resume=False) -> int:
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as err:
        _err(f"{config_path}: {err}")
        return EXIT_CONFIG
    except OSError as err:
        _err(str(err))
        return EXIT_IO
    target = cfg.build_target()
    out = Path(output_dir or cfg.output_dir)
    ckpt_path = out / CHECKPOINT_NAME
    samples_path, attempts_path = out / "samples.csv", out / "attempts.jsonl"
    try:
        out.mkdir(parents=True, exist_ok=True)
        prior_samples = np.empty((0, target.dim))
        prior_attempts: list[ExchangeAttempt] = []
        ckpt = None
        if resume:
            ckpt = load_checkpoint(ckpt_path)
            prior_samples = read_samples(samples_path, target.dim)[:ckpt.iteration]
            if len(prior_samples) < ckpt.iteration:
                raise SchemaError(f"{samples_path}: only {len(prior_samples)} rows before the checkpoint")
            if attempts_path.exists():
                prior_attempts = [a for a in read_attempts(attempts_path) if a.phase < ckpt.phase]
        record = run(
            target, cfg.ladder, cfg.dynamics, cfg.exchange, cfg.iterations, cfg.seed,
            checkpoint_path=ckpt_path if cfg.checkpoint_every else None,
            checkpoint_every=cfg.checkpoint_every, resume=ckpt,
        )
        samples = np.vstack([prior_samples, record.samples])
        attempts = prior_attempts + record.attempts
        write_samples(samples_path, samples)
        with open(attempts_path, "w") as fh:
            for a in attempts:
                fh.write(json.dumps(a.to_json()) + "\n")
        rep = _report_dict(samples, cfg, target, attempts)
        rep["wall_time"] = record.wall_time
        rep["steps"] = record.steps
        (out / "report.json").write_text(json.dumps(rep, indent=2) + "\n")
        (out / "config.json").write_text(json.dumps(
            {"resolved": record.config, "file": cfg.source}, indent=2, default=str) + "\n")
        (out / "config.ini").write_text(Path(config_path).read_text())
    except DivergenceError as err:
        _err(f"divergence: {err}")
        return EXIT_DIVERGENCE
    except (OSError, SchemaError) as err:
        _err(str(err))
        return EXIT_IO
    except ValueError as err:
        # checkpoint decoding and mismatch
        _err(str(err))
        return EXIT_IO
    print(f"wrote {len(samples)} samples to {samples_path}")
    return EXIT_OK


def write_histogram(path: Path, samples: np.ndarray, target) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(target, GaussianMixtureTarget) and target.dim <= 2:
            grid = default_grid(target, HIST_BINS)
            emp, _ = histogram_masses(samples, grid)
            ana = analytic_cell_masses(target, grid)
            edges = grid.edges()
            cols = [f"{k}_{a}" for a in range(target.dim) for k in ("lo", "hi")]
            w.writerow(cols + ["empirical", "analytic"])
            for idx in np.ndindex(*grid.bins):
                bounds = []
                for a, i in enumerate(idx):
                    bounds += [repr(float(edges[a][i])), repr(float(edges[a][i + 1]))]
                w.writerow(bounds + [repr(float(emp[idx])), repr(float(ana[idx]))])
            return
        w.writerow(["coord", "lo", "hi", "empirical"])
        for a in range(samples.shape[1]):
            counts, e = np.histogram(samples[:, a], bins=HIST_BINS)
            for i, c in enumerate(counts):
                w.writerow([a, repr(float(e[i])), repr(float(e[i + 1])), repr(c / len(samples))])


def cmd_analyze(samples_path, config_path, out_dir=None, attempts_path=None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as err:
        _err(f"{config_path}: {err}")
        return EXIT_CONFIG
    except OSError as err:
        _err(str(err))
        return EXIT_IO
    target = cfg.build_target()
    samples_path = Path(samples_path)
    out = Path(out_dir) if out_dir else samples_path.parent
    attempts_path = Path(attempts_path) if attempts_path else samples_path.parent / "attempts.jsonl"
    try:
        samples = read_samples(samples_path, target.dim)
        attempts = read_attempts(attempts_path) if attempts_path.exists() else []
        rep = _report_dict(samples, cfg, target, attempts)
        out.mkdir(parents=True, exist_ok=True)
        (out / "diagnostics.json").write_text(json.dumps(rep, indent=2) + "\n")
        write_histogram(out / "histogram.csv", burn_in_trim(samples, cfg.burn_in), target)
    except (OSError, SchemaError) as err:
        _err(str(err))
        return EXIT_IO
    except ValueError as err:
        _err(f"{samples_path}: {err}")
        return EXIT_IO
    print(json.dumps(rep, indent=2))
    return EXIT_OK


def cmd_check_deconv(sigma2: float, lam: float, n_terms: int, out=None, stride: int = 16) -> int:
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", CompensationWarning)
            dens = build_series(sigma2, lam, n_terms)
    except ValueError as err:
        _err(str(err))
        return EXIT_CONFIG
    for w in caught:
        _err(f"warning: {w.message}")
    error = reconstruct(dens, sigma2)
    print(f"sigma2={sigma2} lambda={lam} n_terms={n_terms}")
    print("coefficients (power of g: exact = decimal)")
    for i, c in enumerate(dens.coeffs):
        print(f"  g^{i}: {c} = {float(c):.6g}")
    print(f"reconstruction max-abs error: {error:.6e} (threshold {RECONSTRUCTION_THRESHOLD:.3e})")
    print(f"clamped negative mass: {dens.negative_mass:.6e}")
    if out:
        rec = convolve_gaussian(dens, sigma2)
        logistic = 0.25 / np.cosh(dens.z / 2) ** 2
        try:
            with open(out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["z", "q_C", "reconstruction", "logistic"])
                for i in range(0, len(dens.z), max(1, stride)):
                    w.writerow([repr(float(x)) for x in (dens.z[i], dens.density[i], rec[i], logistic[i])])
        except OSError as err:
            _err(str(err))
            return EXIT_IO
    if error > RECONSTRUCTION_THRESHOLD:
        _err(f"reconstruction error {error:.3e} exceeds threshold {RECONSTRUCTION_THRESHOLD:.3e}")
        return EXIT_THRESHOLD
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="renhd", description="Replica-exchange Nosé-Hoover sampling.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a sampler from an INI config")
    r.add_argument("config")
    r.add_argument("--set", dest="overrides", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    r.add_argument("--output-dir", help="overrides [run] output_dir")
    r.add_argument("--resume", action="store_true", help="continue from the checkpoint in the output dir")

    a = sub.add_parser("analyze", help="diagnostics for a samples.csv")
    a.add_argument("samples")
    a.add_argument("config")
    a.add_argument("--out-dir", help="where to write diagnostics.json and histogram.csv")
    a.add_argument("--attempts", help="attempts.jsonl (default: next to samples)")

    c = sub.add_parser("check-deconv", help="build and verify a compensation density")
    c.add_argument("--sigma2", type=float, default=0.2)
    c.add_argument("--lambda", dest="lam", type=float, default=10.0)
    c.add_argument("--n-terms", type=int, default=3)
    c.add_argument("--out", help="grid CSV path")
    c.add_argument("--stride", type=int, default=16, help="write every n-th grid node")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            overrides = _parse_overrides(args.overrides)
        except ConfigError as err:
            _err(str(err))
            return EXIT_CONFIG
        return cmd_run(args.config, overrides, args.output_dir, args.resume)
    if args.command == "analyze":
        return cmd_analyze(args.samples, args.config, args.out_dir, args.attempts)
    return cmd_check_deconv(args.sigma2, args.lam, args.n_terms, args.out, args.stride)


if __name__ == "__main__":
    sys.exit(main())
