"""Paris-Erdogan crack-growth curves and their noisy observations.

Crack length ``a`` is in mm, so the stress-intensity range
``dK = dsigma * sqrt(pi * a)`` is in MPa*sqrt(mm). The geometry factor is
fixed at 1 (centre crack in an infinite plate).
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_SUBSTEPS = 64
DEFAULT_A_CEILING = 1000.0


class CrackGrowthDivergence(RuntimeError):
    """Integration ran past the crack-length ceiling."""

    def __init__(self, index: int, value: float, ceiling: float):
        self.index = index
        self.value = value
        self.ceiling = ceiling
        super().__init__(
            f"crack length {value:.6g} mm exceeds ceiling {ceiling:g} mm "
            f"at grid index {index}"
        )


class Fidelity(str, enum.Enum):
    TRUTH = "truth"
    HIGH = "high"
    LOW = "low"


@dataclass(frozen=True)
class ParisParams:
    m: float
    C: float
    delta_sigma: float = 300.0
    a0: float = 3.0

    def __post_init__(self):
        for name in ("m", "C", "delta_sigma", "a0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"ParisParams.{name} must be positive, got {value!r}")

    def growth_rate(self, a: float) -> float:
        """da/dN in mm/cycle at crack length ``a``."""
        return self.C * (self.delta_sigma * math.sqrt(math.pi * a)) ** self.m


@dataclass(frozen=True)
class TimeGrid:
    cycles: np.ndarray

    def __post_init__(self):
        cycles = np.asarray(self.cycles, dtype=float)
        if cycles.ndim != 1 or cycles.size < 2:
            raise ValueError("a time grid needs at least 2 points")
        if cycles[0] != 0.0:
            raise ValueError("a time grid must start at cycle 0")
        steps = np.diff(cycles)
        if np.any(steps <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("time grid must be equidistant")
        cycles.setflags(write=False)
        object.__setattr__(self, "cycles", cycles)

    @property
    def n_points(self) -> int:
        return int(self.cycles.size)

    @property
    def n_cycles_max(self) -> float:
        return float(self.cycles[-1])

    @property
    def spacing(self) -> float:
        return float(self.cycles[1] - self.cycles[0])

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.n_points == other.n_points and bool(
            np.array_equal(self.cycles, other.cycles)
        )

    def __hash__(self):
        return hash((self.n_points, self.n_cycles_max))


@dataclass(frozen=True)
class DamageCurve:
    structure_id: str
    grid: TimeGrid
    values: np.ndarray
    fidelity: Fidelity
    annotations: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise ValueError(
                f"curve {self.structure_id!r} has {values.size} values, "
                f"grid has {self.grid.n_points} points"
            )
        if self.fidelity is Fidelity.TRUTH and np.any(values < 0):
            raise ValueError("noiseless crack lengths must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "fidelity", Fidelity(self.fidelity))

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


def make_grid(n_points: int = 100, n_cycles_max: float = 1.0) -> TimeGrid:
    """Equidistant grid from 0 to ``n_cycles_max`` inclusive."""
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    if not n_cycles_max > 0:
        raise ValueError(f"n_cycles_max must be positive, got {n_cycles_max}")
    return TimeGrid(np.linspace(0.0, float(n_cycles_max), int(n_points)))


def _rk4_advance(params: ParisParams, a: float, h: float, n: int) -> float:
    rate = params.growth_rate
    for _ in range(n):
        k1 = rate(a)
        k2 = rate(a + 0.5 * h * k1)
        k3 = rate(a + 0.5 * h * k2)
        k4 = rate(a + h * k3)
        a = a + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return a


def simulate_curve(
    params: ParisParams,
    grid: TimeGrid,
    substeps: int = DEFAULT_SUBSTEPS,
    structure_id: str = "curve",
    a_ceiling: float = DEFAULT_A_CEILING,
) -> DamageCurve:
    """Integrate da/dN = C (dsigma sqrt(pi a))^m over ``grid`` with classical RK4.

    Each grid interval is split into ``substeps`` uniform RK4 steps.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    # re-validate in case the grid was built around __post_init__
    TimeGrid(grid.cycles)
    values = np.empty(grid.n_points)
    values[0] = a = params.a0
    for i, dn in enumerate(np.diff(grid.cycles), start=1):
        try:
            a = _rk4_advance(params, a, dn / substeps, substeps)
        except (OverflowError, ValueError):
            raise CrackGrowthDivergence(i, math.inf, a_ceiling) from None
        if not math.isfinite(a) or a > a_ceiling:
            raise CrackGrowthDivergence(i, a, a_ceiling)
        values[i] = a
    return DamageCurve(structure_id, grid, values, Fidelity.TRUTH)


def cycles_to_reach(
    params: ParisParams,
    target_length: float,
    n_intervals: int = 99,
    substeps: int = DEFAULT_SUBSTEPS,
    tol: float = 1e-10,
) -> float:
    """Cycle count at which ``simulate_curve`` first reports ``target_length``.

    Bisection on the grid extent, with the same RK4 step size a
    ``n_intervals``-interval grid would use, so the terminal value of the
    resulting grid reproduces ``target_length``.
    """
    if not target_length > params.a0:
        raise ValueError("target length must exceed the initial crack length")

    def terminal(n_max: float) -> float:
        grid = make_grid(2, n_max)
        try:
            return simulate_curve(params, grid, n_intervals * substeps).terminal
        except CrackGrowthDivergence:
            return math.inf

    lo, hi = 0.0, (target_length - params.a0) / params.growth_rate(params.a0)
    while terminal(hi) < target_length:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if terminal(mid) < target_length:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def degrade(
    curve: DamageCurve,
    noise_std: float,
    seed: int,
    fidelity: Fidelity = Fidelity.LOW,
) -> DamageCurve:
    """Add iid zero-mean Gaussian noise to a noiseless curve."""
    if curve.fidelity is not Fidelity.TRUTH:
        raise ValueError("only noiseless curves can be degraded")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    fidelity = Fidelity(fidelity)
    if fidelity is Fidelity.TRUTH:
        raise ValueError("degraded curves must be tagged high or low fidelity")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, curve.grid.n_points) * noise_std
    return DamageCurve(
        curve.structure_id,
        curve.grid,
        curve.values + noise,
        fidelity,
        {"noise_std": float(noise_std)},
    )


# -- CSV persistence ---------------------------------------------------------


def curve_stem(structure_id: str, fidelity: Fidelity) -> str:
    return f"{structure_id}__{Fidelity(fidelity).value}"


def write_curve(curve: DamageCurve, directory: Path | str) -> Path:
    """Write ``<id>__<fidelity>.csv`` plus a ``.json`` metadata sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = curve_stem(curve.structure_id, curve.fidelity)
    path = directory / f"{stem}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["cycle", "value"])
        for cycle, value in zip(curve.grid.cycles, curve.values):
            writer.writerow([repr(float(cycle)), repr(float(value))])
    meta = {
        "structure_id": curve.structure_id,
        "fidelity": curve.fidelity.value,
        "n_points": curve.grid.n_points,
        "annotations": curve.annotations,
    }
    (directory / f"{stem}.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def read_curve(path: Path | str) -> DamageCurve:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cycles = np.array([float(r["cycle"]) for r in rows])
    values = np.array([float(r["value"]) for r in rows])
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        structure_id = meta["structure_id"]
        fidelity = Fidelity(meta["fidelity"])
        annotations = meta.get("annotations", {})
    else:
        structure_id, _, tag = path.stem.rpartition("__")
        fidelity, annotations = Fidelity(tag), {}
    return DamageCurve(structure_id, TimeGrid(cycles), values, fidelity, annotations)
