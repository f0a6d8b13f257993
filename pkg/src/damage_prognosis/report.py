"""Pass/fail checks over experiment runs, written as a JSON summary."""

from __future__ import annotations

import filecmp
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .active import update_model
from .fpca import fit_fpca, project, reconstruct
from .inference import HmcConfig, PartialObservation, grad_log_posterior, hmc_sample, log_posterior
from .pipeline import NOT_UPDATED, ExperimentResult, updated_tag
from .prior import GaussianPrior, fit_gaussian_prior

SCHEMA_VERSION = 1
RANDOM_CASES = 20
GRADIENT_CASES = 100


@dataclass
class Criterion:
    key: str
    passed: bool | None
    detail: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return {True: "pass", False: "fail", None: "not-evaluated"}[self.passed]

    def to_dict(self) -> dict:
        return {"criterion": self.key, "status": self.status, "detail": self.detail}


def outlier_ids(result: ExperimentResult) -> tuple[str, str]:
    """(fastest, slowest) first-testing structures by true terminal length."""
    truths = result.populations.truth["first_testing"]
    order = sorted(truths, key=lambda sid: truths[sid].terminal)
    return order[-1], order[0]


# -- single-run checks -------------------------------------------------------


def variance_concentration(result: ExperimentResult, threshold: float = 0.95) -> Criterion:
    model = fit_fpca(list(result.populations.truth["training"].values()), variance_threshold=threshold)
    ok = model.K == 1 and model.explained_fraction >= threshold - 1e-10
    return Criterion("variance-concentration", ok,
                     {"K": model.K, "explained_fraction": model.explained_fraction})


def score_growth_ordering(result: ExperimentResult) -> Criterion:
    curves = list(result.populations.truth["training"].values())
    model = fit_fpca(curves, variance_threshold=result.config.fpca.variance_threshold or 0.95)
    scores = project(model, np.vstack([c.values for c in curves]))[:, 0]
    terminal = np.array([c.terminal for c in curves])
    ok = bool(np.array_equal(np.argsort(scores), np.argsort(terminal)))
    return Criterion("score-growth-ordering", ok, {
        "scores": {c.structure_id: float(s) for c, s in zip(curves, scores)},
        "terminal": {c.structure_id: float(t) for c, t in zip(curves, terminal)},
    })


def seed_outcomes(result: ExperimentResult) -> dict:
    """Per-run booleans for outlier identification, error decay and informed updating."""
    fast, slow = outlier_ids(result)
    M_star = result.config.monitor.decision_step
    records = result.monitor.records
    means = {sid: r.mean_error for sid, r in records[M_star].items()}
    others = [sid for sid in means if sid not in (fast, slow)]
    outliers_high = min(means[fast], means[slow]) > max(means[o] for o in others) if others else True

    checkpoints = sorted(records)
    lo, hi = checkpoints[0], checkpoints[-1]
    decay = {sid: bool(records[hi][sid].median_error < records[lo][sid].median_error) for sid in records[lo]}

    informed_tag = updated_tag(fast)
    beats = {}
    for M, pooled in result.update.baseline.items():
        if M < M_star:
            continue
        informed = np.concatenate([s.per_draw_weighted_errors for s in result.update.error_sets[informed_tag, M]])
        beats[M] = bool(informed.mean() < pooled.mean())
    return {
        "seed": result.config.seed,
        "mean_errors_at_decision": means,
        "outliers_exceed_rest": bool(outliers_high),
        "selected": result.monitor.decision.selected_structure_id,
        "selected_fastest": result.monitor.decision.selected_structure_id == fast,
        "median_error_decays": decay,
        "all_decay": all(decay.values()),
        "informed_beats_baseline": beats,
        "informed_beats_baseline_all": bool(beats) and all(beats.values()),
    }


def prior_shift(result: ExperimentResult) -> Criterion:
    fast, _ = outlier_ids(result)
    model, prior = result.update.variants[updated_tag(fast)]
    curves = list(result.populations.high["training"].values()) + [result.update.splices[fast]]
    scores = project(model, np.vstack([c.values for c in curves]))
    beta = scores[np.argmax(scores[:, 0])]
    reference = float(prior.density(beta))
    rivals = {
        tag: float(p.density(beta))
        for tag, (_, p) in result.update.variants.items()
        if tag not in (NOT_UPDATED, updated_tag(fast))
    }
    ok = all(reference > d for d in rivals.values())
    return Criterion("prior-shift", ok, {"beta": beta.tolist(), "informed_density": reference,
                                         "other_densities": rivals})


def duplicate_update_stability(result: ExperimentResult, tol: float = 1e-8) -> Criterion:
    curves = list(result.populations.truth["training"].values())
    rule = result.config.fpca.kwargs()
    base = fit_fpca(curves, **rule)
    base_prior = fit_gaussian_prior(project(base, np.vstack([c.values for c in curves])))
    rank = len(curves) - 1
    detail, ok = {}, True
    for c in curves:
        model, prior = update_model(curves, c, **rule)
        shift = float(np.max(np.abs(model.explained_ratios[:rank] - base.explained_ratios[:rank])))
        sigma_ok = bool(np.all(prior.sigma <= base_prior.sigma * (1 + 1e-12)))
        detail[c.structure_id] = {"max_spectrum_change": shift, "sigma_not_increased": sigma_ok}
        ok &= shift <= tol and sigma_ok
    return Criterion("duplicate-update-stability", bool(ok), detail)


def conjugate_calibration(result: ExperimentResult, n_cases: int = RANDOM_CASES,
                          n_samples: int = 100_000) -> Criterion:
    """HMC moments against the closed-form linear-Gaussian posterior (K=1)."""
    curves = list(result.populations.truth["training"].values())
    model = fit_fpca(curves, n_components=1)
    rng = np.random.default_rng(result.config.seed_for("check/conjugate"))
    worst_mean = worst_std = 0.0
    for case in range(n_cases):
        prior = GaussianPrior(rng.normal(0, 1, 1), rng.uniform(0.3, 3.0, 1))
        noise = rng.uniform(0.05, 1.0)
        M = int(rng.integers(5, model.n_points + 1))
        y = reconstruct(model, rng.normal(0, 2, 1))[:M] + rng.normal(0, noise, M)
        phi = model.basis[0, :M]
        prec = 1 / prior.sigma[0] ** 2 + phi @ phi / noise**2
        mean = (prior.mu[0] / prior.sigma[0] ** 2 + phi @ (y - model.mean[:M]) / noise**2) / prec
        std = prec**-0.5
        obs = PartialObservation("case", y, noise)
        s = hmc_sample(model, prior, obs, HmcConfig(n_samples=n_samples, seed=case))
        worst_mean = max(worst_mean, abs(s.mean[0] - mean) / max(abs(mean), std))
        worst_std = max(worst_std, abs(s.draws[:, 0].std(ddof=1) / std - 1))
    return Criterion("conjugate-calibration", worst_mean <= 0.02 and worst_std <= 0.10,
                     {"worst_mean_rel": worst_mean, "worst_std_rel": worst_std})


def gradient_check(result: ExperimentResult, n_cases: int = GRADIENT_CASES) -> Criterion:
    curves = list(result.populations.truth["training"].values())
    rng = np.random.default_rng(result.config.seed_for("check/gradient"))
    worst = 0.0
    for _ in range(n_cases):
        K = int(rng.integers(1, 3))
        model = fit_fpca(curves, n_components=K)
        prior = GaussianPrior(rng.normal(0, 1, K), rng.uniform(0.3, 3.0, K))
        M = int(rng.integers(1, model.n_points + 1))
        obs = PartialObservation("g", model.mean[:M] + rng.normal(0, 1, M), rng.uniform(0.05, 1.0))
        beta = rng.normal(0, 2, K)
        g = grad_log_posterior(model, prior, obs, beta)
        for j in range(K):
            h = 1e-5 * max(1.0, abs(beta[j]))
            e = np.zeros(K)
            e[j] = h
            fd = (log_posterior(model, prior, obs, beta + e) - log_posterior(model, prior, obs, beta - e)) / (2 * h)
            worst = max(worst, abs(g[j] - fd) / max(abs(g[j]), 1.0))
    return Criterion("gradient-check", worst <= 1e-5, {"worst_rel_error": worst})


def compare_artifacts(a: Path, b: Path) -> tuple[bool, list[str]]:
    """Byte comparison of every CSV under two artifact directories."""
    names = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    other = sorted(p.relative_to(b) for p in b.rglob("*.csv"))
    if names != other:
        return False, ["file sets differ"]
    diffs = [str(n) for n in names if not filecmp.cmp(a / n, b / n, shallow=False)]
    return not diffs, diffs


def aggregate(outcomes: list[dict]) -> list[Criterion]:
    n = len(outcomes)
    c5a = sum(o["outliers_exceed_rest"] for o in outcomes)
    c5b = sum(o["selected_fastest"] for o in outcomes)
    c6 = sum(o["all_decay"] for o in outcomes)
    c7 = sum(o["informed_beats_baseline_all"] for o in outcomes)

    def need(k):  # required count scaled from the 10-seed thresholds
        return int(np.ceil(k / 10 * n))

    return [
        Criterion("outlier-identification", c5a >= need(9) and c5b >= need(8),
                  {"seeds": n, "outliers_exceed_rest": c5a, "selected_fastest": c5b,
                   "required": [need(9), need(8)]}),
        Criterion("error-decay", c6 >= need(9), {"seeds": n, "passing": c6, "required": need(9)}),
        Criterion("informed-vs-random", c7 >= need(8), {"seeds": n, "passing": c7, "required": need(8)}),
    ]


def build_report(results: list[ExperimentResult], determinism: Criterion | None = None,
                 diagnostics: bool = True) -> dict:
    head = results[0]
    criteria = [variance_concentration(head), score_growth_ordering(head)]
    if diagnostics:
        criteria += [conjugate_calibration(head), gradient_check(head)]
    outcomes = [seed_outcomes(r) for r in results]
    criteria += aggregate(outcomes)
    criteria += [prior_shift(head), duplicate_update_stability(head)]
    criteria.append(determinism or Criterion("determinism", None))
    return {
        "schema_version": SCHEMA_VERSION,
        "seeds": [r.config.seed for r in results],
        "decision": head.monitor.decision.to_dict(),
        "n_cycles_max": head.populations.n_cycles_max,
        "criteria": [c.to_dict() for c in criteria],
        "per_seed": outcomes,
        "all_passed": all(c.passed for c in criteria if c.passed is not None),
    }


def validate_report(doc: dict) -> None:
    """Minimal structural check of a summary report."""
    required = {"schema_version", "seeds", "decision", "criteria", "per_seed", "all_passed"}
    missing = required - set(doc)
    if missing:
        raise ValueError(f"report is missing {sorted(missing)}")
    for c in doc["criteria"]:
        if set(c) != {"criterion", "status", "detail"} or c["status"] not in ("pass", "fail", "not-evaluated"):
            raise ValueError(f"malformed criterion entry {c!r}")


def write_report(doc: dict, path: Path) -> Path:
    validate_report(doc)
    path.write_text(json.dumps(doc, indent=2, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
