"""
Tests for the Yee time stepper: energy bookkeeping, sources, ports, boundaries and resonances.
"""

import math

import numpy as np
import pytest
from scipy import signal

from qpack.core.constants import C0, EPS0
from qpack.core.errors import AnalysisError, InstabilityError, InvalidParameterError, PlacementError
from qpack.core.fdtd import (
    SourceSpec,
    dft_fields,
    enable_dft,
    field_slice,
    initialize,
    run,
    step,
    total_energy,
    wall_tangential_h,
)
from qpack.core.grid import GridSpec, empty_cavity, voxelize
from qpack.core.materials import COPPER, GOLD_PLATED_COPPER, VACUUM, Material
from qpack.core.oracle import RectCavity, dielectric_shift, rect_modes
from qpack.core.scene import Box, PortSpec, ProbeSpec, Scene
from qpack.core.spectral import find_peaks, s_parameters, spectrum

MM = 1e-3


def _dipole(position, axis=2, fc=30e9, bw=40e9):
    return SourceSpec(kind="dipole", position=position, axis=axis, center_frequency=fc, bandwidth=bw)


def _two_port_grid():
    domain = Box((0, 0, 0), (12 * MM, 8 * MM, 6 * MM), VACUUM.name, 0, "cavity")
    ports = (
        PortSpec("p1", (3 * MM, 4 * MM, 0), (3 * MM, 4 * MM, 1 * MM)),
        PortSpec("p2", (9 * MM, 5 * MM, 0), (9 * MM, 5 * MM, 1 * MM)),
    )
    scene = Scene(domain=domain, ports=ports, materials=(VACUUM, GOLD_PLATED_COPPER), wall_material=GOLD_PLATED_COPPER.name)
    spec = GridSpec.for_domain(domain, (0.5 * MM, 0.5 * MM, 0.5 * MM))
    return voxelize(scene, spec)


def _port_run(source_port, n_steps=3000):
    grid = _two_port_grid()
    source = SourceSpec(kind="port", port=source_port, center_frequency=15e9, bandwidth=24e9)
    state = initialize(grid, grid.spec, [source])
    return run(state, n_steps)


def test_source_bandwidth_is_the_minus_20db_width():
    source = SourceSpec(kind="port", port="p1", center_frequency=12e9, bandwidth=20e9)
    assert source.relative_spectrum(12e9) == pytest.approx(1.0)
    assert source.relative_spectrum(22e9) == pytest.approx(0.1, rel=1e-3)
    assert source.end_time == pytest.approx(12.0 * source.tau)
    assert abs(float(source.waveform(0.0))) < 1e-6


def test_source_rejects_bad_parameters():
    with pytest.raises(InvalidParameterError):
        SourceSpec(kind="dipole")
    with pytest.raises(InvalidParameterError):
        SourceSpec(kind="port")
    with pytest.raises(InvalidParameterError):
        SourceSpec(kind="plane", position=(0, 0, 0))


def test_fresh_state_has_zero_energy_and_stays_zero():
    grid = empty_cavity((8 * MM, 8 * MM, 8 * MM), (1 * MM, 1 * MM, 1 * MM))
    state = initialize(grid, grid.spec, [])
    assert total_energy(state) == 0.0
    for _ in range(20):
        step(state)
    assert total_energy(state) == 0.0
    assert not np.any(state.ex) and not np.any(state.hz)


def test_uniform_field_energy_closed_form():
    """Uniform Ez = 1 V/m in a 1 mm cube stores eps0/2 times the volume."""
    grid = empty_cavity((1 * MM, 1 * MM, 1 * MM), (0.125 * MM, 0.125 * MM, 0.125 * MM))
    state = initialize(grid, grid.spec, [])
    state.ez[...] = 1.0
    assert total_energy(state) == pytest.approx(0.5 * EPS0 * 1e-9, rel=1e-12)


def test_time_step_above_limit_rejected():
    grid = empty_cavity((8 * MM, 8 * MM, 8 * MM), (1 * MM, 1 * MM, 1 * MM))
    with pytest.raises(InvalidParameterError):
        initialize(grid, grid.spec, [], dt=1e-11)


def test_dipole_inside_conductor_rejected():
    domain = Box((0, 0, 0), (8 * MM, 8 * MM, 8 * MM), VACUUM.name, 0, "cavity")
    block = Box((2 * MM, 2 * MM, 2 * MM), (6 * MM, 6 * MM, 6 * MM), COPPER.name, 1, "block")
    scene = Scene(domain=domain, shapes=(block,), materials=(VACUUM, COPPER), wall_material=COPPER.name)
    grid = voxelize(scene, GridSpec.for_domain(domain, (1 * MM, 1 * MM, 1 * MM)))
    with pytest.raises(PlacementError):
        initialize(grid, grid.spec, [_dipole((4 * MM, 4 * MM, 4 * MM))])
    with pytest.raises(PlacementError):
        initialize(grid, grid.spec, [_dipole((0.0, 1 * MM, 1.5 * MM))])


def test_unknown_source_port_rejected():
    grid = _two_port_grid()
    with pytest.raises(PlacementError):
        initialize(grid, grid.spec, [SourceSpec(kind="port", port="p9")])


def test_pec_walls_keep_tangential_e_zero():
    grid = empty_cavity((8 * MM, 8 * MM, 8 * MM), (1 * MM, 1 * MM, 1 * MM))
    state = initialize(grid, grid.spec, [_dipole((3.2 * MM, 4.1 * MM, 3.7 * MM))])
    run(state, 150)
    assert np.any(state.ez)
    for arr, tangential_axes in ((state.ex, (1, 2)), (state.ey, (0, 2)), (state.ez, (0, 1))):
        for a in tangential_axes:
            assert not np.any(np.take(arr, 0, axis=a))
            assert not np.any(np.take(arr, -1, axis=a))


def test_energy_conserved_after_source():
    """Lossless closed box: relative drift below 1e-3 over 10^4 steps once the pulse is over."""
    grid = empty_cavity((8 * MM, 8 * MM, 8 * MM), (1 * MM, 1 * MM, 1 * MM))
    source = _dipole((3.2 * MM, 4.1 * MM, 3.7 * MM))
    state = initialize(grid, grid.spec, [source])
    run(state, math.ceil(source.end_time / state.dt) + 5)
    start = total_energy(state)
    assert start > 0
    run(state, 10_000)
    assert abs(total_energy(state) - start) / start < 1e-3


def test_nan_raises_instability_with_step_index():
    grid = empty_cavity((8 * MM, 8 * MM, 8 * MM), (1 * MM, 1 * MM, 1 * MM))
    state = initialize(grid, grid.spec, [])
    run(state, 3)
    state.hz[2, 2, 2] = np.nan
    with pytest.raises(InstabilityError) as info:
        step(state)
    assert info.value.step == 4


def test_field_slice_follows_te101_pattern():
    """Cell-centred E_y of a TE101 pattern keeps its sin-sin shape in the zx cut."""
    a = d = 16 * MM
    grid = empty_cavity((a, 8 * MM, d), (1 * MM, 1 * MM, 1 * MM))
    state = initialize(grid, grid.spec, [])
    x = grid.spec.nodes(0)[:, None, None]
    z = grid.spec.nodes(2)[None, None, :]
    state.ey[...] = np.sin(math.pi * x / a) * np.sin(math.pi * z / d) * np.ones((1, 8, 1))
    cut = field_slice(state, "zx", 4, "|E|")
    assert cut.shape == (16, 16)
    xc, zc = grid.spec.centers(0), grid.spec.centers(2)
    expected = np.sin(math.pi * zc / d)[:, None] * np.sin(math.pi * xc / a)[None, :]
    np.testing.assert_allclose(cut / cut.max(), expected / expected.max(), rtol=1e-9, atol=1e-12)
    assert field_slice(state, "xy", 8, "Ey").shape == (16, 8)
    with pytest.raises(InvalidParameterError):
        field_slice(state, "xz", 0)


def test_pmc_planes_give_one_dimensional_resonances():
    """PEC along x with PMC along y: a plane source rings at m c / (2a)."""
    a = 16 * MM
    domain = Box((0, 0, 0), (a, 8 * MM, 8 * MM), VACUUM.name, 0, "line")
    scene = Scene(domain=domain, materials=(VACUUM, GOLD_PLATED_COPPER), wall_material=GOLD_PLATED_COPPER.name)
    grid = voxelize(scene, GridSpec.for_domain(domain, (1 * MM, 1 * MM, 1 * MM)))
    plane = SourceSpec(
        kind="dipole", extent=((5 * MM, 0, 0), (5 * MM, 8 * MM, 8 * MM)), axis=2, center_frequency=20e9, bandwidth=30e9
    )
    state = initialize(
        grid, grid.spec, [plane], [ProbeSpec("far", (11 * MM, 4 * MM, 4 * MM))], boundaries=("pec", "pmc", "pec")
    )
    records = run(state, 8000)
    ez = records.probes["far"][:, 2]
    peaks = find_peaks(spectrum(ez, records.dt, "hann", 4), (5e9, 22e9))
    found = [p.f0 for p in peaks]
    for m in (1, 2):
        f = m * C0 / (2 * a)
        assert min(abs(g - f) for g in found) < 0.01 * f


def test_port_runs_are_deterministic():
    first = _port_run("p1", 400)
    second = _port_run("p1", 400)
    assert np.array_equal(first.port_v["p2"], second.port_v["p2"])
    assert np.array_equal(first.port_i["p1"], second.port_i["p1"])


def test_port_incident_wave_is_half_the_source():
    records = _port_run("p1", 200)
    assert np.any(records.port_vs["p1"])
    assert not np.any(records.port_vs["p2"])
    np.testing.assert_allclose(records.port_incident("p1"), 0.5 * records.port_vs["p1"])


def test_transmission_is_reciprocal():
    """|S21| from driving p1 matches |S12| from driving p2 within 1 % RMS."""
    forward = _port_run("p1")
    backward = _port_run("p2")
    s21 = s_parameters(forward.port_v["p1"], forward.port_v["p2"], forward.dt, forward.port_incident("p1"), pad_factor=2)
    s12 = s_parameters(
        backward.port_v["p2"], backward.port_v["p1"], backward.dt, backward.port_incident("p2"), pad_factor=2
    )
    valid = s21.valid & s12.valid
    assert valid.sum() > 10
    a, b = np.abs(s21.s21[valid]), np.abs(s12.s21[valid])
    assert np.sqrt(np.mean((a - b) ** 2)) < 0.01 * np.sqrt(np.mean(a**2))


@pytest.mark.slow
def test_empty_enclosure_modes_match_closed_form():
    """The first five resonances of a 28 x 28 x 10 mm box land within 1 % of the analytic list."""
    extent = (28 * MM, 28 * MM, 10 * MM)
    grid = empty_cavity(extent, (0.5 * MM, 0.5 * MM, 0.5 * MM))
    sources = [
        SourceSpec(kind="dipole", position=(7.3 * MM, 9.1 * MM, 5.2 * MM), axis=2, center_frequency=12e9, bandwidth=20e9),
        SourceSpec(kind="dipole", position=(10.3 * MM, 11.7 * MM, 3.1 * MM), axis=1, center_frequency=12e9, bandwidth=20e9),
    ]
    probe = ProbeSpec("probe", (19.2 * MM, 17.3 * MM, 6.4 * MM))
    state = initialize(grid, grid.spec, sources, [probe])
    records = run(state, 16_000)
    signal = records.probes["probe"][:, 1] + records.probes["probe"][:, 2]
    peaks = find_peaks(spectrum(signal, records.dt, "hann", 4), (5e9, 18.5e9), min_prominence_db=3.0)
    found = [p.f0 for p in peaks]
    analytic = sorted({round(m.f, 3) for m in rect_modes(RectCavity(*extent), 18e9)})[:5]
    assert len(analytic) == 5
    for f in analytic:
        assert min(abs(g - f) for g in found) < 0.01 * f


def _te101_ring():
    """Free TE101 oscillation of unit peak Ey in a 16 x 8 x 16 mm box, H starting at zero."""
    a = d = 16 * MM
    grid = empty_cavity((a, 8 * MM, d), (1 * MM, 1 * MM, 1 * MM))
    state = initialize(grid, grid.spec, [])
    x = grid.spec.nodes(0)[:, None, None]
    z = grid.spec.nodes(2)[None, None, :]
    state.ey[...] = np.sin(math.pi * x / a) * np.sin(math.pi * z / d) * np.ones((1, 8, 1))
    h = 1 * MM
    # Yee dispersion relation of the discrete mode.
    s = C0 * state.dt * math.sqrt(2.0) * math.sin(math.pi * h / (2 * a)) / h
    f = 2.0 * math.asin(s) / (2.0 * math.pi * state.dt)
    return state, f


def test_dft_phasor_is_the_field_amplitude():
    """A unit standing wave accumulates a unit phasor, in V/m, with or without a Hann window."""
    for window in (None, 4000):
        state, f = _te101_ring()
        enable_dft(state, [f], window=window)
        with pytest.raises(AnalysisError):
            dft_fields(state, f)
        run(state, 4000)
        ey = dft_fields(state, f)["ey"]
        assert np.abs(ey).max() == pytest.approx(1.0, rel=1e-2)
        with pytest.raises(AnalysisError):
            dft_fields(state, 2 * f)


def test_run_attaches_wall_phasors():
    state, f = _te101_ring()
    enable_dft(state, [f], window=2000)
    records = run(state, 2000)
    assert set(records.wall_h) == {f}
    assert len(records.wall_h[f]) == len(state.grid.wall_faces)
    np.testing.assert_allclose(records.wall_h[f], wall_tangential_h(state, f))
    assert records.wall_h[f].max() > 0
    assert run(initialize(state.grid, state.grid.spec, []), 5).wall_h == {}


def _envelope_peak(t, x):
    env = np.abs(signal.hilbert(x))
    i = int(np.argmax(env))
    lo, mid, hi = env[i - 1 : i + 2]
    return t[i] + 0.5 * (lo - hi) / (lo - 2 * mid + hi) * (t[1] - t[0])


def test_plane_pulse_travels_at_light_speed():
    """Along a 200-cell line the pulse envelope covers 80 mm in 80 mm / c to within 1 %."""
    domain = Box((0, 0, 0), (200 * MM, 8 * MM, 8 * MM), VACUUM.name, 0, "line")
    scene = Scene(domain=domain, materials=(VACUUM, GOLD_PLATED_COPPER), wall_material=GOLD_PLATED_COPPER.name)
    grid = voxelize(scene, GridSpec.for_domain(domain, (1 * MM, 1 * MM, 1 * MM)))
    assert grid.spec.dims == (200, 8, 8)
    plane = SourceSpec(
        kind="dipole", extent=((20 * MM, 0, 0), (20 * MM, 8 * MM, 8 * MM)), axis=2, center_frequency=8e9, bandwidth=18e9
    )
    probes = [ProbeSpec("a", (40.5 * MM, 4 * MM, 4 * MM)), ProbeSpec("b", (120.5 * MM, 4 * MM, 4 * MM))]
    state = initialize(grid, grid.spec, [plane], probes, boundaries=("pec", "pmc", "pec"))
    records = run(state, 500)
    t_a = _envelope_peak(records.t, records.probes["a"][:, 2])
    t_b = _envelope_peak(records.t, records.probes["b"][:, 2])
    expected = 80 * MM / C0
    assert abs((t_b - t_a) - expected) < 0.01 * expected


def _ring_peak(grid, n_steps):
    source = _dipole((5.2 * MM, 4.1 * MM, 5.7 * MM), axis=1, fc=13e9, bw=8e9)
    state = initialize(grid, grid.spec, [source], [ProbeSpec("p", (10.3 * MM, 3.7 * MM, 10.6 * MM))])
    records = run(state, n_steps)
    peaks = find_peaks(spectrum(records.probes["p"][:, 1], records.dt, "hann", 8), (11e9, 15e9))
    return max(peaks, key=lambda m: m.amplitude)


def test_longer_record_narrows_the_linewidth():
    grid = empty_cavity((16 * MM, 8 * MM, 16 * MM), (1 * MM, 1 * MM, 1 * MM))
    short = _ring_peak(grid, 2500)
    long = _ring_peak(grid, 5000)
    assert long.f0 == pytest.approx(short.f0, rel=2e-3)
    assert long.linewidth < 0.7 * short.linewidth


def test_dielectric_slab_shift_matches_perturbation_estimate():
    """A weak slab across the field maximum pulls TE101 down as first-order perturbation predicts."""
    a, b, d = 16 * MM, 8 * MM, 16 * MM
    slab_material = Material(name="slab", eps_r=1.2)
    slab = Box((0, 0, 7 * MM), (a, b, 9 * MM), slab_material.name, 1, "slab")
    domain = Box((0, 0, 0), (a, b, d), VACUUM.name, 0, "cavity")
    scene = Scene(
        domain=domain,
        shapes=(slab,),
        materials=(VACUUM, GOLD_PLATED_COPPER, slab_material),
        wall_material=GOLD_PLATED_COPPER.name,
    )
    loaded = voxelize(scene, GridSpec.for_domain(domain, (1 * MM, 1 * MM, 1 * MM)))
    empty = empty_cavity((a, b, d), (1 * MM, 1 * MM, 1 * MM))
    f_empty = _ring_peak(empty, 6000).f0
    f_loaded = _ring_peak(loaded, 6000).f0
    predicted = dielectric_shift(RectCavity(a, b, d), (1, 0, 1), slab, slab_material.eps_r)
    assert predicted < 0
    assert f_loaded / f_empty - 1.0 == pytest.approx(predicted, rel=0.1)
