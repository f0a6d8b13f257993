"""Independent Gaussian belief over principal-component scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_FLOOR_REL = 1e-6


@dataclass(frozen=True)
class GaussianPrior:
    mu: np.ndarray
    sigma: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if mu.shape != sigma.shape:
            raise ValueError("mu and sigma must have the same length")
        if np.any(~(sigma > 0)):
            raise ValueError("prior standard deviations must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def K(self) -> int:
        return int(self.mu.size)

    def density(self, beta) -> np.ndarray:
        """Density at one score vector, or at each row of a stack."""
        return np.exp(log_prior_density(self, beta))

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianPrior":
        return cls(np.array(doc["mu"]), np.array(doc["sigma"]), bool(doc["degenerate"]))


def fit_gaussian_prior(score_vectors) -> GaussianPrior:
    """Per-component sample mean and (N-1)-normalised standard deviation.

    A component whose spread falls below ``1e-6 * max(|mu|, 1)`` is floored
    there and the prior is flagged degenerate.
    """
    scores = np.asarray(score_vectors, dtype=float)
    if scores.ndim != 2:
        raise ValueError("score vectors must all have the same length")
    if scores.shape[0] < 2:
        raise ValueError(f"need at least 2 score vectors, got {scores.shape[0]}")
    mu = scores.mean(axis=0)
    sigma = scores.std(axis=0, ddof=1)
    floor = SIGMA_FLOOR_REL * np.maximum(np.abs(mu), 1.0)
    degenerate = bool(np.any(sigma < floor))
    return GaussianPrior(mu, np.maximum(sigma, floor), degenerate)


def log_prior_density(prior: GaussianPrior, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1] != prior.K:
        raise ValueError(f"expected {prior.K} scores, got {beta.shape[-1]}")
    z = (beta - prior.mu) / prior.sigma
    return np.sum(-0.5 * z**2 - np.log(prior.sigma) - 0.5 * np.log(2 * np.pi), axis=-1)
