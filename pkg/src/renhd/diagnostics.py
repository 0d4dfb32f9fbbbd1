"""Sample-quality diagnostics: ESS, grid TV distance, mode coverage."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr

from renhd.targets import GaussianMixtureTarget

MODE_RADIUS_SIGMAS = 3.0
GRID_PAD_SIGMAS = 4.0


@dataclass
class DiagnosticsReport:
    """``ess`` is None when fewer than 100 samples are available."""

    ess: float | None
    tv_distance: float | None
    mode_weights: list[float]
    acceptance_by_pair: list[float | None] = field(default_factory=list)
    sample_count: int = 0
    acceptance_rate: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Empirical autocorrelation at all lags (FFT, biased normalisation)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    x = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / acov[0]


def _ess_1d(x: np.ndarray) -> float:
    n = x.size
    if np.ptp(x) == 0:
        return 1.0
    rho = autocorrelation(x)
    # Geyer's initial positive sequence over lag pairs (rho_2m + rho_2m+1).
    tau = -1.0
    for m in range(n // 2):
        gamma = rho[2 * m] + rho[2 * m + 1]
        if gamma <= 0:
            break
        tau += 2.0 * gamma
    if tau <= 0:
        return float(n)
    return float(min(n, max(1.0, n / tau)))


def effective_sample_size(samples) -> float:
    """ESS of a chain; for ``(n, d)`` input the minimum over coordinates."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 100:
        raise ValueError("ESS needs at least 100 samples")
    return min(_ess_1d(x[:, a]) for a in range(x.shape[1]))


@dataclass(frozen=True)
class GridSpec:
    lo: np.ndarray
    hi: np.ndarray
    bins: tuple[int, ...]

    def edges(self) -> list[np.ndarray]:
        return [np.linspace(l, h, b + 1) for l, h, b in zip(self.lo, self.hi, self.bins)]


def default_grid(target: GaussianMixtureTarget, bins: int = 50) -> GridSpec:
    pad = GRID_PAD_SIGMAS * target.component_std.max()
    lo = target.means.min(axis=0) - pad
    hi = target.means.max(axis=0) + pad
    return GridSpec(lo, hi, (bins,) * target.dim)


def analytic_cell_masses(target: GaussianMixtureTarget, grid: GridSpec, subdiv: int = 8) -> np.ndarray:
    """Probability of each grid cell under the target.

    Exact via per-axis normal CDFs for diagonal covariances; otherwise a
    midpoint rule with ``subdiv`` points per axis inside each cell.
    """
    edges = grid.edges()
    if target.is_diagonal:
        total = np.zeros(grid.bins)
        for k in range(target.n_components):
            sd = np.sqrt(np.diag(target.covariances[k]))
            per_axis = [np.diff(ndtr((e - target.means[k, a]) / sd[a])) for a, e in enumerate(edges)]
            cell = per_axis[0]
            for p in per_axis[1:]:
                cell = np.multiply.outer(cell, p)
            total += target.weights[k] * cell
        return total
    if target.dim > 2:
        raise ValueError("grid masses for non-diagonal targets need dim <= 2")
    fine = [np.repeat(e[:-1], subdiv) + (np.tile(np.arange(subdiv), len(e) - 1) + 0.5)
            * np.repeat(np.diff(e), subdiv) / subdiv for e in edges]
    mesh = np.meshgrid(*fine, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    dens = np.exp(target.log_density_many(pts)).reshape([len(f) for f in fine])
    vol = np.prod([np.diff(e)[0] / subdiv for e in edges])
    for axis in range(target.dim):
        shape = list(dens.shape)
        shape[axis] //= subdiv
        shape.insert(axis + 1, subdiv)
        dens = dens.reshape(shape).sum(axis=axis + 1)
    return dens * vol


def histogram_masses(samples, grid: GridSpec) -> tuple[np.ndarray, float]:
    """Empirical cell masses and the fraction of samples outside the grid."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    counts, _ = np.histogramdd(x, bins=grid.edges())
    n = len(x)
    inside = counts.sum()
    return counts / n, float((n - inside) / n)


def tv_distance(p, q) -> float:
    """Total variation between two mass vectors on the same cells."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    return 0.5 * float(np.abs(p - q).sum())


def tv_distance_grid(samples, target: GaussianMixtureTarget, grid: GridSpec | None = None) -> float:
    """Half the L1 distance between binned samples and analytic cell masses.

    Sample mass and analytic mass falling outside the grid both count as
    discrepancy.
    """
    grid = grid or default_grid(target)
    emp, emp_out = histogram_masses(samples, grid)
    ana = analytic_cell_masses(target, grid)
    ana_out = max(0.0, 1.0 - float(ana.sum()))
    return min(1.0, tv_distance(emp, ana) + 0.5 * (emp_out + ana_out))


def mode_coverage(samples, target: GaussianMixtureTarget, radius_sigmas: float = MODE_RADIUS_SIGMAS) -> np.ndarray:
    """Fraction of samples within ``radius_sigmas`` component std of each mode centre."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1, target.dim)
    r = radius_sigmas * target.component_std
    dist = np.linalg.norm(x[:, None, :] - target.means[None], axis=2)
    return (dist <= r[None]).mean(axis=0)


def report(samples, target=None, acceptance_by_pair=None, acceptance_rate=None,
           grid: GridSpec | None = None) -> DiagnosticsReport:
    x = np.asarray(samples, dtype=np.float64)
    tv, modes = None, []
    if isinstance(target, GaussianMixtureTarget):
        tv = tv_distance_grid(x, target, grid) if target.dim <= 2 else None
        modes = mode_coverage(x, target).tolist()
    acc = [None if np.isnan(a) else float(a) for a in (acceptance_by_pair if acceptance_by_pair is not None else [])]
    n = x.shape[0]
    return DiagnosticsReport(
        ess=effective_sample_size(x) if n >= 100 else None,
        tv_distance=tv,
        mode_weights=modes,
        acceptance_by_pair=acc,
        sample_count=len(x),
        acceptance_rate=acceptance_rate,
    )
