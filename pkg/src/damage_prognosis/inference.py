"""HMC posterior over principal-component scores of a partially observed curve.

The likelihood is iid Gaussian on the first ``M`` grid points around the
fPCA reconstruction, so with the Gaussian prior the negative log-posterior
is an exact quadratic ``U(b) = 0.5 b'Ab - h'b + const``. The sampler works
directly on ``(A, h)``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numba
import numpy as np

from .fpca import FpcaModel, reconstruct
from .prior import GaussianPrior, log_prior_density

log = logging.getLogger(__name__)

LOW_ACCEPTANCE = 0.05


@dataclass(frozen=True)
class PartialObservation:
    structure_id: str
    observed_values: np.ndarray
    noise_std_assumed: float

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.observed_values, dtype=float))
        if values.ndim != 1 or values.size < 1:
            raise ValueError("a partial observation needs at least one value")
        if not self.noise_std_assumed > 0:
            raise ValueError("noise_std_assumed must be positive")
        object.__setattr__(self, "observed_values", values)

    @property
    def M(self) -> int:
        return int(self.observed_values.size)

    @classmethod
    def from_curve(cls, curve, M: int, noise_std: float) -> "PartialObservation":
        if not 1 <= M <= curve.grid.n_points:
            raise ValueError(f"M must lie in [1, {curve.grid.n_points}], got {M}")
        return cls(curve.structure_id, curve.values[:M], noise_std)


@dataclass(frozen=True)
class HmcConfig:
    n_samples: int = 2000
    n_warmup: int = 500
    step_size: float = 0.1
    n_leapfrog: int = 20
    seed: int = 0
    adapt_step_size: bool = True
    target_accept: float = 0.8
    # each transition scales the step by U(1 - j, 1 + j); avoids periodic
    # trajectories on near-Gaussian targets
    step_jitter: float = 0.2

    def __post_init__(self):
        if self.n_samples < 1 or self.n_warmup < 0 or self.n_leapfrog < 1:
            raise ValueError("n_samples and n_leapfrog must be >= 1, n_warmup >= 0")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 0 <= self.step_jitter < 1:
            raise ValueError("step_jitter must lie in [0, 1)")


@dataclass(frozen=True)
class PosteriorSamples:
    draws: np.ndarray  # (n_samples, K)
    acceptance_rate: float
    config: HmcConfig
    step_size: float
    mean_abs_energy_error: float
    structure_id: str = ""

    @property
    def low_acceptance(self) -> bool:
        return self.acceptance_rate < LOW_ACCEPTANCE

    @property
    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    def write_csv(self, path: Path | str) -> Path:
        path = Path(path)
        K = self.draws.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["draw"] + [f"beta_{j + 1}" for j in range(K)])
            for i, row in enumerate(self.draws):
                w.writerow([i] + [repr(float(v)) for v in row])
        meta = {
            "structure_id": self.structure_id,
            "acceptance_rate": self.acceptance_rate,
            "step_size": self.step_size,
            "low_acceptance": self.low_acceptance,
            "config": asdict(self.config),
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return path


def _check(model: FpcaModel, prior: GaussianPrior, obs: PartialObservation, beta=None):
    if prior.K != model.K:
        raise ValueError(f"prior has {prior.K} components, model has {model.K}")
    if obs.M > model.n_points:
        raise ValueError(f"observation has {obs.M} points, grid has {model.n_points}")
    if beta is not None:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (model.K,):
            raise ValueError(f"expected {model.K} scores, got shape {beta.shape}")
        return beta


def log_posterior(model, prior, obs, beta) -> float:
    """Unnormalised log-posterior including all Gaussian constants."""
    beta = _check(model, prior, obs, beta)
    resid = obs.observed_values - reconstruct(model, beta)[: obs.M]
    s = obs.noise_std_assumed
    loglik = -0.5 * np.sum(resid**2) / s**2 - obs.M * (math.log(s) + 0.5 * math.log(2 * math.pi))
    return float(log_prior_density(prior, beta) + loglik)


def grad_log_posterior(model, prior, obs, beta) -> np.ndarray:
    beta = _check(model, prior, obs, beta)
    resid = obs.observed_values - reconstruct(model, beta)[: obs.M]
    return -(beta - prior.mu) / prior.sigma**2 + model.basis[:, : obs.M] @ resid / obs.noise_std_assumed**2


@dataclass(frozen=True)
class QuadraticPotential:
    """``U(b) = 0.5 b'Ab - h'b``, the negative log-posterior up to a constant."""

    A: np.ndarray
    h: np.ndarray

    def energy(self, q) -> float:
        q = np.asarray(q, dtype=float)
        return float(0.5 * q @ self.A @ q - self.h @ q)

    def grad(self, q) -> np.ndarray:
        return self.A @ np.asarray(q, dtype=float) - self.h


def build_potential(model, prior, obs, flat_likelihood: bool = False) -> QuadraticPotential:
    _check(model, prior, obs)
    A = np.diag(1.0 / prior.sigma**2)
    h = prior.mu / prior.sigma**2
    if not flat_likelihood:
        phi = model.basis[:, : obs.M]
        prec = 1.0 / obs.noise_std_assumed**2
        A = A + prec * phi @ phi.T
        h = h + prec * phi @ (obs.observed_values - model.mean[: obs.M])
    return QuadraticPotential(A, h)


@numba.njit(cache=True)
def _leapfrog(q, p, A, h, eps, n_steps):
    q = q.copy()
    p = p - 0.5 * eps * (A @ q - h)
    for i in range(n_steps):
        q = q + eps * p
        if i < n_steps - 1:
            p = p - eps * (A @ q - h)
    p = p - 0.5 * eps * (A @ q - h)
    return q, p


@numba.njit(cache=True)
def _energy(q, A, h):
    return 0.5 * (q @ (A @ q)) - h @ q


@numba.njit(cache=True)
def _hmc_kernel(A, h, q0, eps0, n_leapfrog, n_warmup, n_samples,
                momenta, log_u, jitter, adapt, target):
    K = q0.size
    draws = np.empty((n_samples, K))
    q = q0.copy()
    U = _energy(q, A, h)
    eps = eps0
    # dual averaging (Hoffman & Gelman 2014, alg. 5)
    mu_da = math.log(10.0 * eps0)
    h_bar = 0.0
    log_eps_bar = 0.0
    gamma, t0, kappa = 0.05, 10.0, 0.75
    accepted = 0
    abs_dh = 0.0
    for it in range(n_warmup + n_samples):
        p = momenta[it]
        q_new, p_new = _leapfrog(q, p, A, h, eps * jitter[it], n_leapfrog)
        U_new = _energy(q_new, A, h)
        dH = (U_new + 0.5 * (p_new @ p_new)) - (U + 0.5 * (p @ p))
        if not math.isfinite(dH):
            dH = math.inf
        accept_prob = 1.0 if dH <= 0.0 else math.exp(-dH)
        if log_u[it] < -dH:
            q = q_new
            U = U_new
            if it >= n_warmup:
                accepted += 1
        if it < n_warmup:
            if adapt:
                m = it + 1.0
                h_bar = (1.0 - 1.0 / (m + t0)) * h_bar + (target - accept_prob) / (m + t0)
                log_eps = mu_da - math.sqrt(m) / gamma * h_bar
                w = m ** (-kappa)
                log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar
                eps = math.exp(log_eps)
                if it == n_warmup - 1:
                    eps = math.exp(log_eps_bar)
        else:
            draws[it - n_warmup] = q
            abs_dh += abs(dH) if math.isfinite(dH) else 1e300
    return draws, accepted / n_samples, eps, abs_dh / n_samples


def leapfrog(potential: QuadraticPotential, q, p, step_size: float, n_steps: int):
    """Leapfrog trajectory under ``potential`` with identity mass matrix."""
    return _leapfrog(np.asarray(q, float), np.asarray(p, float),
                     potential.A, potential.h, float(step_size), int(n_steps))


def hmc_sample(
    model: FpcaModel,
    prior: GaussianPrior,
    obs: PartialObservation,
    config: HmcConfig = HmcConfig(),
    *,
    flat_likelihood: bool = False,
) -> PosteriorSamples:
    """Draw scores from the posterior, starting at the prior mean.

    ``flat_likelihood`` switches the data term off so the chain targets the
    prior alone; it exists for sampler validation.
    """
    beta0 = prior.mu.copy()
    if not math.isfinite(log_posterior(model, prior, obs, beta0)):
        raise FloatingPointError("log-posterior is not finite at the initial point")
    potential = build_potential(model, prior, obs, flat_likelihood)
    rng = np.random.default_rng(config.seed)
    n_total = config.n_warmup + config.n_samples
    momenta = rng.standard_normal((n_total, model.K))
    log_u = np.log(rng.random(n_total))
    jitter = 1.0 + config.step_jitter * (2.0 * rng.random(n_total) - 1.0)
    draws, rate, eps, abs_dh = _hmc_kernel(
        potential.A, potential.h, beta0, float(config.step_size),
        int(config.n_leapfrog), int(config.n_warmup), int(config.n_samples),
        momenta, log_u, jitter, bool(config.adapt_step_size), float(config.target_accept),
    )
    samples = PosteriorSamples(draws, float(rate), config, float(eps), float(abs_dh), obs.structure_id)
    if samples.low_acceptance:
        log.warning("HMC acceptance %.3f for %s is below %.2f",
                    rate, obs.structure_id, LOW_ACCEPTANCE)
    return samples


def predict_curve(model: FpcaModel, beta) -> np.ndarray:
    """Full-length curve for a score vector, including the unobserved part."""
    return reconstruct(model, beta)


def posterior_point_prediction(samples: PosteriorSamples, model: FpcaModel) -> np.ndarray:
    return reconstruct(model, samples.draws.mean(axis=0))
