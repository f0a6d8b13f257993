"""Discrete functional PCA on a shared equidistant grid.

Inner product between two curves on an ``n``-point grid is
``<f, g> = sum(f * g) / n``; basis rows are orthonormal under it and the
covariance is normalised by the number of curves ``N``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .paris import DamageCurve, TimeGrid

SIGN_CONVENTION = "terminal-max-v1"
_SIGN_TOL = 1e-12


def inner(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Uniform-weight discrete inner product along the last axis."""
    f = np.asarray(f, dtype=float)
    return np.inner(f, g) / f.shape[-1]


@dataclass(frozen=True)
class FpcaModel:
    grid: TimeGrid
    mean: np.ndarray
    basis: np.ndarray  # shape (K, n_points)
    eigenvalues: np.ndarray
    total_variance: float
    spectrum: np.ndarray = field(repr=False)  # every eigenvalue, not only the kept K
    degenerate: bool = False
    prior: "object | None" = field(default=None, compare=False, repr=False)

    @property
    def K(self) -> int:
        return int(self.basis.shape[0])

    @property
    def n_points(self) -> int:
        return self.grid.n_points

    @property
    def explained_fraction(self) -> float:
        if self.total_variance <= 0:
            return 1.0
        return float(self.eigenvalues.sum() / self.total_variance)

    @property
    def explained_ratios(self) -> np.ndarray:
        """Per-component variance fractions over the full spectrum."""
        if self.total_variance <= 0:
            return np.zeros_like(self.spectrum)
        return self.spectrum / self.total_variance

    def with_prior(self, prior) -> "FpcaModel":
        return FpcaModel(
            self.grid, self.mean, self.basis, self.eigenvalues,
            self.total_variance, self.spectrum, self.degenerate, prior,
        )

    def to_dict(self) -> dict:
        doc = {
            "sign_convention": SIGN_CONVENTION,
            "cycles": self.grid.cycles.tolist(),
            "mean": self.mean.tolist(),
            "basis": self.basis.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "spectrum": self.spectrum.tolist(),
            "total_variance": self.total_variance,
            "K": self.K,
            "degenerate": self.degenerate,
        }
        if self.prior is not None:
            doc["prior"] = self.prior.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "FpcaModel":
        from .prior import GaussianPrior

        if doc.get("sign_convention") != SIGN_CONVENTION:
            raise ValueError(
                f"unsupported sign convention {doc.get('sign_convention')!r}"
            )
        basis = np.array(doc["basis"], dtype=float).reshape(int(doc["K"]), -1)
        prior = GaussianPrior.from_dict(doc["prior"]) if "prior" in doc else None
        return cls(
            TimeGrid(np.array(doc["cycles"], dtype=float)),
            _frozen(doc["mean"]),
            _frozen(basis),
            _frozen(doc["eigenvalues"]),
            float(doc["total_variance"]),
            _frozen(doc["spectrum"]),
            bool(doc["degenerate"]),
            prior,
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: Path | str) -> "FpcaModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _stack(curves: Sequence[DamageCurve]) -> tuple[TimeGrid, np.ndarray]:
    if len(curves) < 2:
        raise ValueError(f"fPCA needs at least 2 curves, got {len(curves)}")
    grid = curves[0].grid
    for c in curves[1:]:
        if c.grid != grid:
            raise ValueError(f"curve {c.structure_id!r} is on a different grid")
    return grid, np.vstack([c.values for c in curves])


def fit_fpca(
    curves: Sequence[DamageCurve],
    *,
    n_components: int | None = None,
    variance_threshold: float | None = None,
) -> FpcaModel:
    """Fit the mean function and principal basis of a curve population.

    Exactly one of ``n_components`` (fixed K) or ``variance_threshold``
    (smallest K whose cumulative explained fraction reaches it) is given.
    Basis rows are signed to point towards the curve with the largest
    terminal value.
    """
    if (n_components is None) == (variance_threshold is None):
        raise ValueError("give exactly one of n_components or variance_threshold")
    if variance_threshold is not None and not 0 < variance_threshold <= 1:
        raise ValueError(f"variance threshold must lie in (0, 1], got {variance_threshold}")
    grid, X = _stack(curves)
    return fit_fpca_array(grid, X, n_components=n_components,
                          variance_threshold=variance_threshold)


def fit_fpca_array(grid, X, *, n_components=None, variance_threshold=None) -> FpcaModel:
    N, n = X.shape
    mean = X.mean(axis=0)
    centered = X - mean
    # right singular vectors of the centred data = covariance eigenvectors
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    spectrum = s**2 / (N * n)
    total = float(np.sum(centered**2) / (N * n))
    degenerate = total <= 1e-14 * max(1.0, float(np.mean(X**2)))
    if degenerate:
        spectrum = np.zeros_like(spectrum)
        total = 0.0

    if n_components is not None:
        if not 1 <= n_components <= vt.shape[0]:
            raise ValueError(f"n_components must lie in [1, {vt.shape[0]}]")
        K = int(n_components)
    elif degenerate:
        K = 1
    else:
        cumulative = np.cumsum(spectrum) / total
        K = int(np.searchsorted(cumulative, variance_threshold - 1e-12) + 1)
        K = min(K, vt.shape[0])

    basis = vt[:K] * np.sqrt(n)
    reference = X[int(np.argmax(X[:, -1]))] - mean
    for row in basis:
        direction = inner(row, reference)
        if direction < -_SIGN_TOL or (abs(direction) <= _SIGN_TOL and row[-1] < 0):
            row *= -1.0
    return FpcaModel(
        grid,
        _frozen(mean),
        _frozen(basis),
        _frozen(spectrum[:K]),
        total,
        _frozen(spectrum),
        bool(degenerate),
    )


def project(model: FpcaModel, values) -> np.ndarray:
    """Principal-component scores of a full-length curve."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != model.n_points:
        raise ValueError(
            f"expected {model.n_points} values, got {values.shape[-1]}"
        )
    return inner(values - model.mean, model.basis)


def reconstruct(model: FpcaModel, scores) -> np.ndarray:
    """Mean function plus score-weighted basis rows.

    Accepts a single score vector or a stack of them (one per row).
    """
    scores = np.asarray(scores, dtype=float)
    if scores.shape[-1] != model.K:
        raise ValueError(f"expected {model.K} scores, got {scores.shape[-1]}")
    return model.mean + scores @ model.basis
