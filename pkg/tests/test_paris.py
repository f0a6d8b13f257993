import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damage_prognosis.paris import (
    CrackGrowthDivergence,
    DamageCurve,
    Fidelity,
    ParisParams,
    TimeGrid,
    degrade,
    make_grid,
    read_curve,
    simulate_curve,
    write_curve,
)

from conftest import TABLE1, TABLE2
from oracles import euler_crack_length

GOLDEN = Path(__file__).parent / "golden"


class TestMakeGrid:
    def test_two_points(self):
        np.testing.assert_array_equal(make_grid(2, 100).cycles, [0, 100])

    def test_exact_arithmetic(self):
        np.testing.assert_array_equal(make_grid(5, 8).cycles, [0, 2, 4, 6, 8])

    def test_hundred_points(self, n_cycles_max):
        g = make_grid(100, n_cycles_max)
        assert g.n_points == 100
        np.testing.assert_allclose(np.diff(g.cycles), n_cycles_max / 99, rtol=1e-12)
        assert g.cycles[-1] == n_cycles_max

    @pytest.mark.parametrize("n", [0, 1, -3])
    def test_rejects_short_grid(self, n):
        with pytest.raises(ValueError):
            make_grid(n, 10)

    def test_rejects_nonpositive_extent(self):
        with pytest.raises(ValueError):
            make_grid(5, 0)

    def test_rejects_degenerate_grid(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            TimeGrid(np.array([0.0, 0.0]))

    def test_rejects_uneven_grid(self):
        with pytest.raises(ValueError, match="equidistant"):
            TimeGrid(np.array([0.0, 1.0, 3.0]))


class TestParisParams:
    @pytest.mark.parametrize("field", ["m", "C", "delta_sigma", "a0"])
    def test_positive(self, field):
        kwargs = dict(m=2.65, C=6e-13, delta_sigma=300.0, a0=3.0)
        kwargs[field] = 0.0
        with pytest.raises(ValueError):
            ParisParams(**kwargs)


class TestSimulate:
    def test_blue_starts_at_a0_and_grows(self, training_curves):
        blue = training_curves[0]
        assert blue.fidelity is Fidelity.TRUTH
        assert blue.values[0] == 3.0
        assert np.all(np.diff(blue.values) > 0)

    def test_blue_matches_golden(self, training_curves):
        golden = read_curve(GOLDEN / "blue__truth.csv")
        np.testing.assert_allclose(training_curves[0].values, golden.values, rtol=1e-10)

    def test_reference_curve_hits_terminal_length(self, training_curves):
        # the grid extent was found by bisection so that green ends at 20 mm
        assert training_curves[2].terminal == pytest.approx(20.0, rel=1e-8)

    def test_first_step_against_fine_euler(self, grid):
        p = TABLE1["blue"]
        curve = simulate_curve(p, grid)
        euler = euler_crack_length(p.m, p.C, p.delta_sigma, p.a0, grid.cycles[1], 1_000_000)
        assert curve.values[1] == pytest.approx(euler, rel=1e-3)

    def test_divergence_reports_index(self, grid):
        runaway = ParisParams(3.5, 1e-10)
        with pytest.raises(CrackGrowthDivergence) as err:
            simulate_curve(runaway, grid)
        assert 1 <= err.value.index < grid.n_points
        assert str(err.value.index) in str(err.value)

    def test_substeps_validated(self, grid):
        with pytest.raises(ValueError):
            simulate_curve(TABLE1["blue"], grid, substeps=0)

    @pytest.mark.parametrize("sid", list(TABLE1) + list(TABLE2))
    def test_convex_on_grid(self, grid, sid):
        p = {**TABLE1, **TABLE2}[sid]
        values = simulate_curve(p, grid).values
        assert np.all(np.diff(values, 2) >= 0)

    def test_substep_convergence(self, grid):
        p = TABLE2["pink"]
        coarse = simulate_curve(p, grid, substeps=64).terminal
        fine = simulate_curve(p, grid, substeps=128).terminal
        assert abs(fine - coarse) / fine < 1e-4


@settings(max_examples=15, deadline=None)
@given(
    m=st.floats(2.6, 2.7),
    C=st.floats(4e-13, 7e-13),
    bump=st.floats(1e-3, 0.01),
)
def test_growth_increases_with_m_and_C(m, C, bump):
    grid = make_grid(20, 40000)
    base = simulate_curve(ParisParams(m, C), grid).values
    steeper = simulate_curve(ParisParams(m * (1 + bump), C), grid).values
    faster = simulate_curve(ParisParams(m, C * (1 + bump)), grid).values
    assert np.all(steeper[1:] > base[1:])
    assert np.all(faster[1:] > base[1:])


@pytest.fixture(scope="module")
def blue(training_curves):
    return training_curves[0]


@pytest.fixture(scope="module")
def seed_stack(blue):
    return np.array([degrade(blue, 0.5, seed=k).values for k in range(1, 1001)]) - blue.values


class TestDegrade:
    def test_zero_noise_identity(self, blue):
        out = degrade(blue, 0.0, seed=123, fidelity=Fidelity.HIGH)
        np.testing.assert_array_equal(out.values, blue.values)
        assert out.fidelity is Fidelity.HIGH

    def test_deterministic(self, blue):
        a = degrade(blue, 0.5, seed=1)
        b = degrade(blue, 0.5, seed=1)
        np.testing.assert_array_equal(a.values, b.values)

    def test_rejects_negative_noise(self, blue):
        with pytest.raises(ValueError):
            degrade(blue, -0.1, seed=0)

    def test_rejects_noisy_input(self, blue):
        noisy = degrade(blue, 0.1, seed=0)
        with pytest.raises(ValueError):
            degrade(noisy, 0.1, seed=0)

    def test_noise_scale_over_seeds(self, seed_stack):
        per_point = seed_stack.std(axis=0, ddof=1)
        # pooled estimate at 5%; each point within 4.5 sampling standard errors
        assert per_point.mean() == pytest.approx(0.5, rel=0.05)
        se = 0.5 / math.sqrt(2 * (seed_stack.shape[0] - 1))
        assert np.all(np.abs(per_point - 0.5) < 4.5 * se)
        assert np.all(np.abs(seed_stack.mean(axis=0)) < 4.5 * 0.5 / math.sqrt(1000))

    @pytest.mark.xfail(strict=True, reason=(
        "a 5% bound on each of 100 per-point estimates from 1000 draws is a "
        "2.2-sigma test per point; several points exceed it by chance"
    ))
    def test_noise_scale_every_point_within_5_percent(self, seed_stack):
        per_point = seed_stack.std(axis=0, ddof=1)
        assert np.all(np.abs(per_point / 0.5 - 1) <= 0.05)


def test_curve_length_must_match_grid():
    with pytest.raises(ValueError):
        DamageCurve("x", make_grid(3, 2), np.zeros(4), Fidelity.TRUTH)


def test_csv_round_trip(tmp_path, training_curves):
    noisy = degrade(training_curves[1], 0.05, seed=7, fidelity=Fidelity.HIGH)
    path = write_curve(noisy, tmp_path)
    assert path.name == "orange__high.csv"
    assert path.read_text().splitlines()[0] == "cycle,value"
    back = read_curve(path)
    assert back.structure_id == "orange" and back.fidelity is Fidelity.HIGH
    np.testing.assert_array_equal(back.values, noisy.values)
    np.testing.assert_array_equal(back.grid.cycles, noisy.grid.cycles)
