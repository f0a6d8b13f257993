"""Experiment orchestration.

Every stage is a pure function of the config (and the previous stage's
output); the ``save_*``/``load_*`` helpers move stage outputs through an
artifact directory for the CLI.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import active, evaluation
from .config import ExperimentConfig
from .fpca import FpcaModel, fit_fpca, project
from .inference import PartialObservation, PosteriorSamples, hmc_sample, posterior_point_prediction
from .paris import (
    DamageCurve,
    Fidelity,
    ParisParams,
    cycles_to_reach,
    degrade,
    make_grid,
    read_curve,
    simulate_curve,
    write_curve,
)
from .prior import GaussianPrior, fit_gaussian_prior

log = logging.getLogger(__name__)

GROUPS = ("training", "first_testing", "second_testing")
NOT_UPDATED = "not-updated"
BASELINE = "random-baseline"


def updated_tag(structure_id: str) -> str:
    return f"updated-with-{structure_id}"


@dataclass
class Populations:
    n_cycles_max: float
    params: dict[str, dict[str, ParisParams]]
    truth: dict[str, dict[str, DamageCurve]]
    high: dict[str, dict[str, DamageCurve]]
    low: dict[str, dict[str, DamageCurve]]

    def curves(self, fidelity: Fidelity, group: str) -> dict[str, DamageCurve]:
        return {Fidelity.TRUTH: self.truth, Fidelity.HIGH: self.high, Fidelity.LOW: self.low}[fidelity][group]


@dataclass
class FitResult:
    model: FpcaModel
    prior: GaussianPrior
    scores: dict[str, np.ndarray]


@dataclass
class MonitorResult:
    records: dict[int, dict[str, active.ErrorRecord]]
    decision: active.AllocationDecision
    point_predictions: dict[str, np.ndarray]  # at the decision step
    acceptance: dict[tuple[str, int], float] = field(default_factory=dict)


@dataclass
class UpdateResult:
    informed: str
    splices: dict[str, DamageCurve]
    variants: dict[str, tuple[FpcaModel, GaussianPrior]]
    error_sets: dict[tuple[str, int], list[evaluation.TerminalErrorSet]]
    baseline: dict[int, np.ndarray]
    stats: evaluation.PopulationStats


# -- stages ------------------------------------------------------------------


def resolve_n_cycles_max(config: ExperimentConfig) -> float:
    g = config.grid
    if g.n_cycles_max is not None:
        return float(g.n_cycles_max)
    ref = config.training[g.reference_structure].params()
    return cycles_to_reach(ref, g.terminal_length, g.n_points - 1, g.substeps)


def population_params(config: ExperimentConfig) -> dict[str, dict[str, ParisParams]]:
    sp = config.second_population
    second = evaluation.sample_second_population(
        sp.n_structures, config.seed_for("pop2/params"), sp.m_base,
        sp.m_multiplier, sp.C_range, sp.delta_sigma, sp.a0,
    )
    return {
        "training": {k: v.params() for k, v in config.training.items()},
        "first_testing": {k: v.params() for k, v in config.first_testing.items()},
        "second_testing": second,
    }


def simulate(config: ExperimentConfig) -> Populations:
    n_max = resolve_n_cycles_max(config)
    grid = make_grid(config.grid.n_points, n_max)
    params = population_params(config)
    truth, high, low = {}, {}, {}
    for group, members in params.items():
        truth[group], high[group], low[group] = {}, {}, {}
        for sid, p in members.items():
            t = simulate_curve(p, grid, config.grid.substeps, sid, config.grid.a_ceiling)
            truth[group][sid] = t
            high[group][sid] = degrade(t, config.noise.high, config.seed_for(f"sim/{sid}/high"), Fidelity.HIGH)
            low[group][sid] = degrade(t, config.noise.low, config.seed_for(f"sim/{sid}/low"), Fidelity.LOW)
    return Populations(n_max, params, truth, high, low)


def fit(config: ExperimentConfig, pops: Populations) -> FitResult:
    """Basis and prior from the high-fidelity training curves."""
    curves = list(pops.high["training"].values())
    model = fit_fpca(curves, **config.fpca.kwargs())
    scores = project(model, np.vstack([c.values for c in curves]))
    prior = fit_gaussian_prior(scores)
    return FitResult(model.with_prior(prior), prior,
                     {c.structure_id: s for c, s in zip(curves, scores)})


def _sample(config, model, prior, curve, M, label) -> tuple[PartialObservation, PosteriorSamples]:
    obs = PartialObservation.from_curve(curve, M, config.noise.low)
    return obs, hmc_sample(model, prior, obs, config.hmc.config(config.seed_for(label)))


def monitor(config: ExperimentConfig, pops: Populations, model: FpcaModel, prior: GaussianPrior) -> MonitorResult:
    """Prefix-MSE error records for every low-fidelity testing curve and checkpoint."""
    M_star = config.monitor.decision_step
    steps = sorted(set(config.monitor.checkpoints) | {M_star})
    records: dict[int, dict[str, active.ErrorRecord]] = {}
    points, acceptance = {}, {}
    for M in steps:
        records[M] = {}
        for sid, curve in pops.low["first_testing"].items():
            obs, samples = _sample(config, model, prior, curve, M, f"hmc/monitor/{sid}/M{M}")
            records[M][sid] = active.error_record(samples, model, obs)
            acceptance[sid, M] = samples.acceptance_rate
            if M == M_star:
                points[sid] = posterior_point_prediction(samples, model)
    decision = active.select_structure(list(records[M_star].values()), config.monitor.statistic)
    log.info("decision at M=%d: %s", M_star, decision.selected_structure_id)
    return MonitorResult(records, decision, points, acceptance)


def update_and_evaluate(
    config: ExperimentConfig,
    pops: Populations,
    model: FpcaModel,
    prior: GaussianPrior,
    point_predictions: dict[str, np.ndarray],
    informed: str,
) -> UpdateResult:
    """Refit with each candidate's splice, then score every variant on the second population."""
    M_star = config.monitor.decision_step
    training = list(pops.high["training"].values())
    candidates = pops.high["first_testing"]
    if informed not in candidates:
        raise KeyError(f"unknown candidate {informed!r}")
    splices, variants = {}, {NOT_UPDATED: (model, prior)}
    for sid, tail in candidates.items():
        splices[sid] = active.splice_curve(point_predictions[sid], tail, M_star)
        variants[updated_tag(sid)] = active.update_model(training, splices[sid], **config.fpca.kwargs())

    truths = pops.truth["second_testing"]
    stats = evaluation.PopulationStats.from_curves(list(truths.values()))
    error_sets: dict[tuple[str, int], list[evaluation.TerminalErrorSet]] = {}
    for tag, (m, p) in variants.items():
        for M in config.monitor.checkpoints:
            sets = []
            for sid, curve in pops.low["second_testing"].items():
                _, samples = _sample(config, m, p, curve, M, f"hmc/{tag}/{sid}/M{M}")
                sets.append(evaluation.terminal_error_set(samples, m, truths[sid], stats, tag, M))
            error_sets[tag, M] = sets
    baseline = {
        M: evaluation.random_baseline([error_sets[updated_tag(sid), M] for sid in candidates])
        for M in config.monitor.checkpoints
    }
    return UpdateResult(informed, splices, variants, error_sets, baseline, stats)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    populations: Populations
    fit: FitResult
    monitor: MonitorResult
    update: UpdateResult


def run_experiment(config: ExperimentConfig, force_candidate: str | None = None) -> ExperimentResult:
    pops = simulate(config)
    fitted = fit(config, pops)
    mon = monitor(config, pops, fitted.model, fitted.prior)
    informed = force_candidate or mon.decision.selected_structure_id
    upd = update_and_evaluate(config, pops, fitted.model, fitted.prior, mon.point_predictions, informed)
    return ExperimentResult(config, pops, fitted, mon, upd)


# -- persistence -------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_populations(out: Path, pops: Populations) -> list[Path]:
    paths = []
    for fid in Fidelity:
        for group in GROUPS:
            for curve in pops.curves(fid, group).values():
                paths.append(write_curve(curve, out / "curves" / group / fid.value))
    manifest = {
        "n_cycles_max": pops.n_cycles_max,
        "groups": {g: list(pops.truth[g]) for g in GROUPS},
        "params": {
            g: {sid: vars(p) for sid, p in members.items()} for g, members in pops.params.items()
        },
    }
    _atomic_write(out / "populations.json", json.dumps(manifest, indent=2))
    return paths


def load_populations(out: Path) -> Populations:
    manifest_path = out / "populations.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{manifest_path} not found; run `simulate` first")
    manifest = json.loads(manifest_path.read_text())
    store = {fid: {} for fid in Fidelity}
    for fid in Fidelity:
        for group, ids in manifest["groups"].items():
            store[fid][group] = {
                sid: read_curve(out / "curves" / group / fid.value / f"{sid}__{fid.value}.csv")
                for sid in ids
            }
    params = {g: {sid: ParisParams(**p) for sid, p in m.items()} for g, m in manifest["params"].items()}
    return Populations(manifest["n_cycles_max"], params, store[Fidelity.TRUTH],
                       store[Fidelity.HIGH], store[Fidelity.LOW])


def save_fit(out: Path, fitted: FitResult) -> Path:
    path = out / "model" / "model.json"
    _atomic_write(path, json.dumps(fitted.model.to_dict(), indent=2))
    rows = ["structure_id," + ",".join(f"beta_{j + 1}" for j in range(fitted.model.K))]
    rows += [sid + "," + ",".join(repr(float(v)) for v in s) for sid, s in fitted.scores.items()]
    _atomic_write(out / "model" / "training_scores.csv", "\r\n".join(rows) + "\r\n")
    return path


def load_fit(out: Path) -> tuple[FpcaModel, GaussianPrior]:
    path = out / "model" / "model.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `fit` first")
    model = FpcaModel.load(path)
    if model.prior is None:
        raise ValueError(f"{path} has no prior block")
    return model, model.prior


def save_monitor(out: Path, mon: MonitorResult) -> None:
    d = out / "monitor"
    d.mkdir(parents=True, exist_ok=True)
    for M, recs in mon.records.items():
        active.write_error_records(recs.values(), d / f"errors_M{M:03d}.csv")
    active.write_decision(mon.decision, d / "decision.json")
    rows = ["structure_id,index,value"]
    for sid, curve in mon.point_predictions.items():
        rows += [f"{sid},{i},{float(v)!r}" for i, v in enumerate(curve)]
    _atomic_write(d / "point_predictions.csv", "\r\n".join(rows) + "\r\n")


def load_monitor_outputs(out: Path) -> tuple[active.AllocationDecision, dict[str, np.ndarray]]:
    d = out / "monitor"
    if not (d / "decision.json").exists():
        raise FileNotFoundError(f"{d / 'decision.json'} not found; run `monitor` first")
    decision = active.read_decision(d / "decision.json")
    points: dict[str, list[float]] = {}
    with open(d / "point_predictions.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            points.setdefault(row["structure_id"], []).append(float(row["value"]))
    return decision, {k: np.array(v) for k, v in points.items()}


def save_update(out: Path, upd: UpdateResult) -> None:
    d = out / "update"
    for sid, curve in upd.splices.items():
        write_curve(curve, d / "splices")
    for tag, (m, _) in upd.variants.items():
        _atomic_write(d / "models" / f"{tag}.json", json.dumps(m.to_dict(), indent=2))
    all_sets = [s for sets in upd.error_sets.values() for s in sets]
    evaluation.write_terminal_errors(all_sets, _ensure(d) / "terminal_errors.csv")

    grids = {}
    for (tag, M), sets in upd.error_sets.items():
        grids[tag, M] = evaluation.density_grid(np.concatenate([s.per_draw_weighted_errors for s in sets]))
    for M, pooled in upd.baseline.items():
        grids[BASELINE, M] = evaluation.density_grid(pooled)
    evaluation.write_densities(grids, d / "densities.csv")

    rows = ["model_tag,M,mean_error,median_error,mean_point_error"]
    for (tag, M), sets in upd.error_sets.items():
        draws = np.concatenate([s.per_draw_weighted_errors for s in sets])
        point = np.mean([s.point_error for s in sets])
        rows.append(f"{tag},{M},{float(draws.mean())!r},{float(np.median(draws))!r},{float(point)!r}")
    for M, pooled in upd.baseline.items():
        rows.append(f"{BASELINE},{M},{float(pooled.mean())!r},{float(np.median(pooled))!r},")
    _atomic_write(d / "summary.csv", "\r\n".join(rows) + "\r\n")
    _atomic_write(d / "informed.json", json.dumps({"informed": upd.informed}, indent=2))


def _ensure(d: Path) -> Path:
    d.mkdir(parents=True, exist_ok=True)
    return d
