"""Error monitoring and allocation of the single high-fidelity monitor."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fpca import FpcaModel, fit_fpca, project, reconstruct
from .inference import PartialObservation, PosteriorSamples
from .paris import DamageCurve, Fidelity
from .prior import GaussianPrior, fit_gaussian_prior

STATISTICS = ("mean", "median")


@dataclass(frozen=True)
class ErrorRecord:
    structure_id: str
    M: int
    per_draw_errors: np.ndarray

    def __post_init__(self):
        errors = np.asarray(self.per_draw_errors, dtype=float)
        if errors.ndim != 1 or errors.size == 0:
            raise ValueError("an error record needs at least one draw")
        if np.any(errors < 0):
            raise ValueError("squared errors cannot be negative")
        object.__setattr__(self, "per_draw_errors", errors)

    @property
    def mean_error(self) -> float:
        return float(self.per_draw_errors.mean())

    @property
    def median_error(self) -> float:
        return float(np.median(self.per_draw_errors))

    def statistic(self, name: str = "mean") -> float:
        if name not in STATISTICS:
            raise ValueError(f"unknown statistic {name!r}")
        return self.mean_error if name == "mean" else self.median_error


@dataclass(frozen=True)
class AllocationDecision:
    selected_structure_id: str
    decision_step: int
    candidate_errors: dict = field(default_factory=dict)
    statistic: str = "mean"

    def to_dict(self) -> dict:
        return {
            "selected_structure_id": self.selected_structure_id,
            "decision_step": self.decision_step,
            "statistic": self.statistic,
            "candidate_errors": dict(sorted(self.candidate_errors.items())),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AllocationDecision":
        return cls(doc["selected_structure_id"], int(doc["decision_step"]),
                   dict(doc["candidate_errors"]), doc.get("statistic", "mean"))


def mse_error(predicted, obs: PartialObservation) -> np.ndarray:
    """Mean squared residual over the observed prefix.

    ``predicted`` may be one curve or a stack of curves (one per row); the
    result then has one entry per row.
    """
    predicted = np.asarray(predicted, dtype=float)
    if obs.M == 0:
        raise ValueError("no observed points")
    if predicted.shape[-1] < obs.M:
        raise ValueError(
            f"prediction has {predicted.shape[-1]} points, need {obs.M}"
        )
    resid = predicted[..., : obs.M] - obs.observed_values
    return np.mean(resid**2, axis=-1)


def error_record(samples: PosteriorSamples, model: FpcaModel, obs: PartialObservation) -> ErrorRecord:
    curves = reconstruct(model, samples.draws)
    return ErrorRecord(obs.structure_id, obs.M, mse_error(curves, obs))


def select_structure(records: Sequence[ErrorRecord], statistic: str = "mean") -> AllocationDecision:
    """Pick the structure whose observed history the model explains worst.

    Ties go to the smallest structure id.
    """
    if not records:
        raise ValueError("no error records to select from")
    steps = {r.M for r in records}
    if len(steps) != 1:
        raise ValueError(f"records mix observation counts {sorted(steps)}")
    errors = {r.structure_id: r.statistic(statistic) for r in records}
    best = min(errors, key=lambda sid: (-errors[sid], sid))
    return AllocationDecision(best, steps.pop(), errors, statistic)


def splice_curve(interpolated, high_fidelity_tail: DamageCurve, M_star: int) -> DamageCurve:
    """Model interpolation for the first ``M_star`` points, measured tail after."""
    interpolated = np.asarray(interpolated, dtype=float)
    n = high_fidelity_tail.grid.n_points
    if high_fidelity_tail.fidelity is not Fidelity.HIGH:
        raise ValueError("the tail must come from the high-fidelity system")
    if interpolated.shape != (n,):
        raise ValueError(f"interpolated curve must have {n} points")
    if not 1 <= M_star < n:
        raise ValueError(f"splice index must lie in [1, {n - 1}], got {M_star}")
    values = np.concatenate([interpolated[:M_star], high_fidelity_tail.values[M_star:]])
    return DamageCurve(
        high_fidelity_tail.structure_id,
        high_fidelity_tail.grid,
        values,
        Fidelity.HIGH,
        {"splice_at": int(M_star)},
    )


def update_model(
    training_curves: Sequence[DamageCurve],
    new_curve: DamageCurve,
    *,
    n_components: int | None = None,
    variance_threshold: float | None = None,
) -> tuple[FpcaModel, GaussianPrior]:
    """Refit basis and prior on the training set augmented with ``new_curve``."""
    curves = list(training_curves) + [new_curve]
    model = fit_fpca(curves, n_components=n_components, variance_threshold=variance_threshold)
    scores = project(model, np.vstack([c.values for c in curves]))
    prior = fit_gaussian_prior(scores)
    return model.with_prior(prior), prior


def write_error_records(records: Iterable[ErrorRecord], path: Path | str) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["structure_id", "M", "draw_index", "error"])
        for rec in records:
            for i, e in enumerate(rec.per_draw_errors):
                w.writerow([rec.structure_id, rec.M, i, repr(float(e))])
    return path


def read_error_records(path: Path | str) -> list[ErrorRecord]:
    grouped: dict[tuple[str, int], list[float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            grouped.setdefault((row["structure_id"], int(row["M"])), []).append(float(row["error"]))
    return [ErrorRecord(sid, M, np.array(v)) for (sid, M), v in grouped.items()]


def write_decision(decision: AllocationDecision, path: Path | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(decision.to_dict(), indent=2))
    return path


def read_decision(path: Path | str) -> AllocationDecision:
    return AllocationDecision.from_dict(json.loads(Path(path).read_text()))
