"""
Tests for surface-participation conductor loss and the Q / T1 relations.
"""

import math

import numpy as np
import pytest

from qpack.core.errors import InvalidParameterError
from qpack.core.fdtd import SourceSpec, enable_dft, initialize, run
from qpack.core.grid import empty_cavity
from qpack.core.loss import (
    QFlag,
    WallFieldSet,
    q_cond,
    q_cond_breakdown,
    q_to_t1,
    skin_depth,
    surface_resistance,
    t1_to_q,
    thermal_frequency,
    wall_field_set,
)
from qpack.core.materials import GOLD_PLATED_COPPER
from qpack.core.oracle import RectCavity, rect_te101_q

MM = 1e-3


def _walls(sigma=4.5e9, h_t=1.0, energy=1e-12, groups=("enclosure", "enclosure", "pedestal", "post")):
    n = len(groups)
    return WallFieldSet(
        frequency=6e9,
        h_t=np.full(n, h_t),
        area=np.full(n, 1e-6),
        sigma=np.full(n, sigma),
        energy=energy,
        group=np.array(groups, dtype=object),
    )


def test_copper_skin_depth_and_surface_resistance():
    """Room-temperature copper at 1 GHz: about 2.09 um and 8.25 mOhm."""
    delta = skin_depth(5.8e7, 1e9)
    assert delta == pytest.approx(2.09e-6, rel=5e-3)
    rs = surface_resistance(5.8e7, 1e9)
    assert rs == pytest.approx(1.0 / (5.8e7 * delta), rel=1e-12)
    assert rs == pytest.approx(8.25e-3, rel=5e-3)


def test_perfect_conductor_has_no_surface_resistance():
    assert surface_resistance(math.inf, 5e9) == 0.0
    with pytest.raises(InvalidParameterError):
        surface_resistance(0.0, 5e9)
    with pytest.raises(InvalidParameterError):
        skin_depth(5.8e7, -1.0)


def test_q_cond_closed_form():
    walls = _walls()
    rs = surface_resistance(4.5e9, 6e9)
    loss = 0.5 * rs * 1.0 * 1e-6 * 4
    assert q_cond(walls) == pytest.approx(2 * math.pi * 6e9 * 1e-12 / loss, rel=1e-12)


def test_q_cond_scales_with_root_conductivity():
    assert q_cond(_walls(sigma=4 * 4.5e9)) == pytest.approx(2.0 * q_cond(_walls()), rel=1e-12)


def test_q_cond_scales_with_energy_over_field_squared():
    base = q_cond(_walls())
    assert q_cond(_walls(h_t=2.0)) == pytest.approx(base / 4.0, rel=1e-12)
    assert q_cond(_walls(energy=3e-12)) == pytest.approx(3.0 * base, rel=1e-12)


def test_breakdown_adds_up_to_total():
    walls = _walls()
    parts = q_cond_breakdown(walls)
    assert set(parts) == {"enclosure", "pedestal", "post"}
    assert sum(parts.values()) == pytest.approx(1.0 / q_cond(walls), rel=1e-12)
    assert parts["enclosure"] == pytest.approx(2.0 * parts["pedestal"], rel=1e-12)
    only_posts = walls.select(walls.group == "post")
    assert 1.0 / q_cond(only_posts) == pytest.approx(parts["post"], rel=1e-12)


def test_lossless_walls_give_infinite_q():
    assert q_cond(_walls(sigma=math.inf)) is QFlag.INFINITE
    assert q_cond(_walls(h_t=0.0)) is QFlag.INFINITE
    assert q_to_t1(QFlag.INFINITE, 5e9) is QFlag.INFINITE


def test_wall_field_set_validation():
    with pytest.raises(InvalidParameterError):
        WallFieldSet(frequency=6e9, h_t=np.ones(2), area=np.ones(3), sigma=np.ones(2), energy=1.0)
    with pytest.raises(InvalidParameterError):
        _walls(energy=0.0)
    with pytest.raises(InvalidParameterError):
        _walls(sigma=-1.0)


def test_t1_of_a_high_q_package():
    """Q = 4.5e6 at 4.8 GHz corresponds to about 150 us."""
    t1 = q_to_t1(4.5e6, 4.8e9)
    assert 141e-6 <= t1 <= 157e-6
    assert t1_to_q(t1, 4.8e9) == pytest.approx(4.5e6, rel=1e-12)
    with pytest.raises(InvalidParameterError):
        q_to_t1(-1.0, 4.8e9)


def test_thermal_frequency_at_10_mk():
    assert thermal_frequency(0.01) == pytest.approx(0.2083e9, rel=1e-3)
    assert thermal_frequency(0.0) == 0.0
    with pytest.raises(InvalidParameterError):
        thermal_frequency(-1.0)


def test_solver_te101_q_matches_closed_form():
    """Phasor fields of a ringing TE101 mode in a 30 mm gold-plated cube give Q_cond within 10 %."""
    side = 30 * MM
    cavity = RectCavity(side, side, side, sigma=GOLD_PLATED_COPPER.sigma)
    f101 = cavity.frequency(1, 0, 1)
    grid = empty_cavity((side, side, side), (side / 16, side / 16, side / 16))
    source = SourceSpec(
        kind="dipole", position=(side / 2, side / 2, side / 2), axis=1, center_frequency=f101, bandwidth=2e9
    )
    dt_probe = initialize(grid, grid.spec, [source]).dt
    start = math.ceil(source.end_time / dt_probe)
    state = initialize(grid, grid.spec, [source], dft_frequencies=[f101], dft_start=start)
    run(state, start + 3000)
    walls = wall_field_set(state, f101)
    assert len(walls.h_t) == 6 * 16 * 16
    q = q_cond(walls)
    expected = rect_te101_q(cavity)
    assert abs(q - expected) / expected < 0.10


def _te101_q_error(cells):
    side = 30 * MM
    cavity = RectCavity(side, side, side, sigma=GOLD_PLATED_COPPER.sigma)
    f101 = cavity.frequency(1, 0, 1)
    h = side / cells
    grid = empty_cavity((side, side, side), (h, h, h))
    source = SourceSpec(
        kind="dipole", position=(side / 2, side / 2, side / 2), axis=1, center_frequency=f101, bandwidth=2e9
    )
    state = initialize(grid, grid.spec, [source])
    run(state, math.ceil(source.end_time / state.dt))
    enable_dft(state, [f101], window=3000 * cells // 16)
    records = run(state, 3000 * cells // 16)
    q = q_cond(wall_field_set(state, f101, records.wall_h[f101]))
    expected = rect_te101_q(cavity)
    return abs(q - expected) / expected


@pytest.mark.slow
def test_solver_q_improves_under_refinement():
    coarse, fine = _te101_q_error(10), _te101_q_error(20)
    assert fine < coarse
    assert fine < 0.05
