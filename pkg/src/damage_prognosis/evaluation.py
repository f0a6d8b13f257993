"""Weighted terminal-prediction errors and the random-selection baseline."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import gaussian_kde

from .fpca import FpcaModel, reconstruct
from .inference import PosteriorSamples
from .paris import DamageCurve, ParisParams


@dataclass(frozen=True)
class PopulationStats:
    """Terminal-length statistics of the evaluation population."""

    y_max: float
    sigma_y100: float

    @classmethod
    def from_curves(cls, truths: Sequence[DamageCurve]) -> "PopulationStats":
        terminal = np.array([c.terminal for c in truths])
        if terminal.size < 2:
            raise ValueError("need at least two curves for a terminal spread")
        return cls(float(terminal.max()), float(terminal.std(ddof=1)))


@dataclass(frozen=True)
class TerminalErrorSet:
    structure_id: str
    M: int
    per_draw_weighted_errors: np.ndarray
    model_tag: str
    point_error: float = float("nan")


def weighted_terminal_error(y_hat_100, y_100: float, y_max: float, sigma_y100: float):
    """Squared terminal error scaled by the population spread and by growth speed.

    ``100 * y_100 / (y_max * sigma_y100**2) * (y_hat_100 - y_100)**2``
    """
    if not y_max > 0:
        raise ValueError("y_max must be positive")
    if not sigma_y100 > 0:
        raise ValueError("sigma_y100 must be positive")
    y_hat_100 = np.asarray(y_hat_100, dtype=float)
    out = 100.0 * y_100 / (y_max * sigma_y100**2) * (y_hat_100 - y_100) ** 2
    return float(out) if out.ndim == 0 else out


def terminal_error_set(
    samples: PosteriorSamples,
    model: FpcaModel,
    truth: DamageCurve,
    stats: PopulationStats,
    model_tag: str,
    M: int,
) -> TerminalErrorSet:
    terminal_draws = reconstruct(model, samples.draws)[:, -1]
    errors = weighted_terminal_error(terminal_draws, truth.terminal, stats.y_max, stats.sigma_y100)
    point = weighted_terminal_error(
        reconstruct(model, samples.draws.mean(axis=0))[-1],
        truth.terminal, stats.y_max, stats.sigma_y100,
    )
    return TerminalErrorSet(truth.structure_id, M, np.atleast_1d(errors), model_tag, point)


def random_baseline(error_sets: Sequence) -> np.ndarray:
    """Equal-weight pool of per-candidate error draws.

    Each element is an array of draws or a sequence of ``TerminalErrorSet``
    for one candidate-updated model. All candidates must contribute the
    same number of draws so that plain concatenation is an equal-weight
    mixture.
    """
    if len(error_sets) == 0:
        raise ValueError("no candidate error sets")
    arrays = [_draws(s) for s in error_sets]
    if len({a.size for a in arrays}) != 1:
        raise ValueError("candidates must contribute equal numbers of draws")
    return np.concatenate(arrays)


def _draws(s) -> np.ndarray:
    if isinstance(s, TerminalErrorSet):
        return s.per_draw_weighted_errors
    if len(s) and isinstance(s[0], TerminalErrorSet):
        return np.concatenate([t.per_draw_weighted_errors for t in s])
    return np.asarray(s, dtype=float).ravel()


def density_grid(draws, n_grid: int = 512, pad: float = 6.0) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE with Silverman bandwidth, evaluated on a padded grid.

    For plotting only. Constant inputs give a unit spike at the value.
    """
    draws = np.asarray(draws, dtype=float).ravel()
    spread = draws.std(ddof=1) if draws.size > 1 else 0.0
    if spread == 0.0:
        x = np.array([draws[0]])
        return x, np.array([1.0])
    kde = gaussian_kde(draws, bw_method="silverman")
    bw = float(np.sqrt(kde.covariance[0, 0]))
    x = np.linspace(draws.min() - pad * bw, draws.max() + pad * bw, n_grid)
    return x, kde(x)


def sample_second_population(
    n_structures: int,
    seed: int,
    m_base: float = 2.65,
    m_multiplier: tuple[float, float] = (0.995, 1.005),
    C_range: tuple[float, float] = (5.1e-13, 6.72e-13),
    delta_sigma: float = 300.0,
    a0: float = 3.0,
) -> dict[str, ParisParams]:
    rng = np.random.default_rng(seed)
    mult = rng.uniform(*m_multiplier, n_structures)
    C = rng.uniform(*C_range, n_structures)
    width = max(2, len(str(n_structures - 1)))
    return {
        f"s2-{i:0{width}d}": ParisParams(float(m_base * mult[i]), float(C[i]), delta_sigma, a0)
        for i in range(n_structures)
    }


def write_terminal_errors(sets: Iterable[TerminalErrorSet], path: Path | str) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["model_tag", "structure_id", "M", "draw", "error"])
        for s in sets:
            for i, e in enumerate(s.per_draw_weighted_errors):
                w.writerow([s.model_tag, s.structure_id, s.M, i, repr(float(e))])
    return path


def write_densities(grids: Mapping[tuple[str, int], tuple[np.ndarray, np.ndarray]], path: Path | str) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["model_tag", "M", "x", "density"])
        for (tag, M), (x, d) in grids.items():
            for xi, di in zip(x, d):
                w.writerow([tag, M, repr(float(xi)), repr(float(di))])
    return path
