"""
Build -> voxelize -> simulate -> analyze pipelines behind the command-line runner.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from qpack import __version__
from qpack.core.config import GHZ, MM, RunConfig
from qpack.core.constants import C0
from qpack.core.errors import AnalysisError, ArtifactError, ConfigError, ModeLostError
from qpack.core.fdtd import (
    PLANES,
    ProbeRecords,
    SolverState,
    SourceSpec,
    enable_dft,
    field_slice,
    initialize,
    run,
)
from qpack.core.file_operations import ArtifactManager, DefaultFileOperations, FileOperations
from qpack.core.grid import GridSpec, MaterialGrid, cfl_timestep, voxelize
from qpack.core.loss import (
    QFlag,
    QValue,
    q_cond,
    q_cond_breakdown,
    q_to_t1,
    skin_depth,
    surface_resistance,
    t1_to_q,
    thermal_frequency,
    wall_field_set,
)
from qpack.core.oracle import RectCavity, mode_kinds, rect_modes
from qpack.core.scene import PackageParams, Scene, build_package, validate_scene
from qpack.core.spectral import (
    CHIP_RESONANCE,
    ModeRecord,
    SParameters,
    find_peaks,
    mode_table,
    s_parameters,
    spectrum,
)

COMMANDS = ("modes", "s21", "qcond", "sweep-gap", "field-slice", "validate")

# Probe that the loss pass drives and listens to.
RESONATOR_PROBE = "resonator"


@dataclass(frozen=True)
class Scenario:
    """Everything needed to simulate one package configuration, in SI units."""

    params: PackageParams
    cell: Tuple[float, float, float]
    source: SourceSpec
    n_steps: int
    window: str = "decay"
    pad_factor: int = 4
    floor_db: float = -40.0
    min_prominence_db: float = 6.0
    chip_window: Optional[float] = None
    loss_bandwidth: float = 2e9
    progress_every: int = 0

    @classmethod
    def from_config(cls, config: RunConfig, gap_delta_mm: Optional[float] = None) -> "Scenario":
        return cls(
            params=config.package_params(gap_delta_mm),
            cell=config.cell(),
            source=config.source_spec("p1"),
            n_steps=config.n_steps,
            window=config.window,
            pad_factor=config.pad_factor,
            floor_db=config.floor_db,
            min_prominence_db=config.min_prominence_db,
            chip_window=config.chip_window,
            loss_bandwidth=config.loss_bandwidth,
            progress_every=config.progress_every,
        )

    def with_gap(self, gap_delta: float) -> "Scenario":
        return replace(self, params=self.params.with_gap(gap_delta))

    def bare_chip(self) -> "Scenario":
        return replace(self, params=self.params.bare_chip())


@dataclass
class ScenarioResult:
    scene: Scene
    grid: MaterialGrid
    state: SolverState
    records: ProbeRecords
    sparams: SParameters
    peaks: List[ModeRecord]
    modes: List[ModeRecord]
    designed: Optional[float] = None

    def valid_range(self) -> Tuple[float, float]:
        f = self.sparams.f[self.sparams.valid]
        return float(f[0]), float(f[-1])


def simulate(
    scenario: Scenario,
    dft_frequencies: Sequence[float] = (),
    dft_start: Optional[int] = None,
    designed: Optional[float] = None,
) -> ScenarioResult:
    """
    Run one scenario and extract S-parameters and the in-band mode table.

    Peaks are classified against `designed`, or against the scene's analytic estimate when it is
    not given. DFT accumulation starts after the excitation unless `dft_start` says otherwise.
    """
    params = scenario.params
    scene = build_package(params)
    spec = GridSpec.for_domain(scene.domain, scenario.cell)
    grid = voxelize(scene, spec)
    if dft_start is None:
        dft_start = math.ceil(scenario.source.end_time / cfl_timestep(spec))
    state = initialize(grid, spec, [scenario.source], dft_frequencies=dft_frequencies, dft_start=dft_start)
    logging.info(
        "Simulating %s gap %.3f mm on %s cells for %d steps (dt=%.4e s)",
        params.mounting,
        params.gap_delta / MM,
        spec.dims,
        scenario.n_steps,
        state.dt,
    )
    records = run(state, scenario.n_steps, scenario.progress_every)
    sparams = s_parameters(
        records.port_v["p1"],
        records.port_v["p2"],
        records.dt,
        records.port_incident("p1"),
        window=scenario.window,
        pad_factor=scenario.pad_factor,
        floor_db=scenario.floor_db,
    )
    band = params.band_of_interest
    designed = scene.designed_resonance if designed is None else designed
    peaks = find_peaks(sparams.s21_spectrum(), band, scenario.min_prominence_db)
    modes = mode_table(peaks, band, designed, scenario.chip_window)
    return ScenarioResult(scene, grid, state, records, sparams, peaks, modes, designed)


def pick_tracked_mode(peaks: Sequence[ModeRecord], f_target: float, window: float) -> Optional[ModeRecord]:
    """Peak nearest f_target within a relative window, or None."""
    near = [m for m in peaks if abs(m.f0 - f_target) <= window * f_target]
    if not near:
        return None
    return min(near, key=lambda m: abs(m.f0 - f_target))


def designed_from_reference(peaks: Sequence[ModeRecord], estimate: float, window: float) -> float:
    """
    Chip resonance as measured on the bare chip.

    The peak nearest the analytic estimate within `window` wins, then the strongest peak; with no
    peaks at all the estimate itself is returned.
    """
    mode = pick_tracked_mode(peaks, estimate, window)
    if mode is None and peaks:
        mode = max(peaks, key=lambda m: m.amplitude)
        logging.warning(
            "No bare-chip peak within %.0f%% of %.4g GHz; using the strongest at %.4g GHz",
            100 * window,
            estimate / GHZ,
            mode.f0 / GHZ,
        )
    if mode is None:
        logging.warning("Bare chip shows no in-band peak; keeping the estimate %.4g GHz", estimate / GHZ)
        return estimate
    return mode.f0


def reference_resonance(scenario: Scenario, window: float) -> float:
    """Designed chip frequency from a run of the same chip with nothing underneath it."""
    result = simulate(scenario.bare_chip())
    designed = designed_from_reference(result.peaks, scenario.params.designed_resonance(), window)
    logging.info(
        "Bare-chip resonance %.4g GHz (analytic estimate %.4g GHz)",
        designed / GHZ,
        scenario.params.designed_resonance() / GHZ,
    )
    return designed


@dataclass
class LossResult:
    f0: float
    q_cond: QValue
    breakdown: Dict[str, float]


def conductor_q(scenario: Scenario, f0: float) -> LossResult:
    """
    Second pass: ring up the mode near f0 and integrate its wall loss.

    The ports are removed so the mode rings freely. A narrowband dipole across the resonator slot
    excites it; once the drive has decayed, the first third of the remaining steps locates the ring
    frequency and the rest accumulate a Hann-weighted phasor at that frequency.
    """
    scene = build_package(scenario.params).without_ports()
    spec = GridSpec.for_domain(scene.domain, scenario.cell)
    grid = voxelize(scene, spec)
    source = SourceSpec(
        kind="dipole",
        position=scene.probe(RESONATOR_PROBE).position,
        axis=1,
        center_frequency=f0,
        bandwidth=scenario.loss_bandwidth,
    )
    state = initialize(grid, spec, [source])
    settle = math.ceil(source.end_time / state.dt)
    search = (scenario.n_steps - settle) // 3
    n_dft = scenario.n_steps - settle - search
    if search < 16:
        raise AnalysisError(
            f"n_steps={scenario.n_steps} leaves no ring-down after the {settle}-step loss excitation"
        )
    records = run(state, settle + search, scenario.progress_every)

    ring = spectrum(records.probes[RESONATOR_PROBE][settle:, 1], state.dt, "hann", 16)
    half = 0.5 * scenario.loss_bandwidth
    band = (max(f0 - half, ring.f[1]), f0 + half)
    peaks = find_peaks(ring, band)
    part = ring.band(*band)
    if peaks:
        f_ring = min(peaks, key=lambda m: abs(m.f0 - f0)).f0
    elif part.f.size:
        f_ring = float(part.f[np.argmax(part.magnitude)])
    else:
        raise AnalysisError(f"loss-pass ring-down resolves no bin within {half / GHZ:.3g} GHz of {f0 / GHZ:.4g} GHz")
    logging.info("Loss pass: mode near %.5g GHz rings at %.5g GHz", f0 / GHZ, f_ring / GHZ)

    enable_dft(state, [f_ring], window=n_dft)
    records = run(state, n_dft, scenario.progress_every)
    walls = wall_field_set(state, f_ring, records.wall_h[f_ring])
    return LossResult(f0=f_ring, q_cond=q_cond(walls), breakdown=q_cond_breakdown(walls))


@dataclass
class SweepRow:
    gap_delta: float
    f0: Optional[float]
    q_cond: Optional[QValue]
    status: str
    breakdown: Dict[str, float] = field(default_factory=dict)

    @property
    def inv_q(self) -> Optional[float]:
        if self.q_cond is None:
            return None
        return 0.0 if self.q_cond is QFlag.INFINITE else 1.0 / self.q_cond

    def t1(self, f: Optional[float] = None) -> Optional[QValue]:
        if self.q_cond is None or self.f0 is None:
            return None
        return q_to_t1(self.q_cond, f or self.f0)


def _spectral_pass(scenario: Scenario) -> List[ModeRecord]:
    return simulate(scenario).peaks


def _loss_pass(job: Tuple[Scenario, float]) -> LossResult:
    return conductor_q(*job)


def _map(fn: Callable, items: List, workers: int) -> List:
    """Ordered map, in-process for a single worker."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def gap_sweep_qcond(
    template: Scenario, deltas: Sequence[float], workers: int = 1, tracking_window: float = 0.15
) -> List[SweepRow]:
    """
    Q_cond of the chip mode for each gap depth, in ascending depth order.

    The bare-chip run fixes the starting frequency. The chip mode is then followed by
    nearest-frequency continuation from the deepest gap, where the package couples least, towards
    the solid pedestal; a depth with no peak inside the tracking window is reported as mode_lost.
    """
    deltas = sorted(float(d) for d in deltas)
    scenarios = [template.with_gap(d) for d in deltas]
    bare_peaks, *peaks_per_gap = _map(_spectral_pass, [template.bare_chip(), *scenarios], workers)

    f_track = designed_from_reference(bare_peaks, template.params.designed_resonance(), tracking_window)
    chosen: Dict[float, Optional[ModeRecord]] = {}
    for delta, peaks in reversed(list(zip(deltas, peaks_per_gap))):
        mode = pick_tracked_mode(peaks, f_track, tracking_window)
        if mode is None:
            logging.warning("Chip mode lost at gap %.3f mm (tracking %.4g GHz)", delta / MM, f_track / GHZ)
        else:
            f_track = mode.f0
        chosen[delta] = mode

    modes = [chosen[d] for d in deltas]
    jobs = [(s, m.f0) for s, m in zip(scenarios, modes) if m is not None]
    losses = iter(_map(_loss_pass, jobs, workers))
    rows = []
    for delta, mode in zip(deltas, modes):
        if mode is None:
            rows.append(SweepRow(gap_delta=delta, f0=None, q_cond=None, status="mode_lost"))
            continue
        loss = next(losses)
        status = "infinite_q" if loss.q_cond is QFlag.INFINITE else "ok"
        rows.append(SweepRow(gap_delta=delta, f0=loss.f0, q_cond=loss.q_cond, status=status, breakdown=loss.breakdown))
    return rows


@dataclass
class CommandResult:
    command: str
    exit_code: int = 0
    artifacts: List[str] = field(default_factory=list)
    message: str = ""


def _us(value) -> Optional[object]:
    if value is None or value is QFlag.INFINITE:
        return value
    return value * 1e6


def _mode_rows(modes: Sequence[ModeRecord]):
    return [(m.f0, m.q_loaded, m.amplitude, m.classification, m.refined) for m in modes]


MODE_COLUMNS = ("f0_Hz", "Q", "amplitude", "class", "refined")
S21_COLUMNS = ("f_Hz", "s21_mag", "s21_dB", "s11_dB")
QCOND_COLUMNS = ("delta_mm", "f0_Hz", "Qcond", "inv_Qcond", "T1_us_at_f0", "T1_us_at_ref", "status")


def _cmd_validate(config: RunConfig, out: ArtifactManager, workers: int) -> int:
    params = config.package_params()
    scene = build_package(params)
    report = validate_scene(scene)
    checks: List[Tuple[str, bool, str]] = []
    for finding in report.findings:
        checks.append((f"scene:{finding.kind}", False, finding.message))
    checks.append(("scene:findings", report.ok, f"{len(report.findings)} findings"))

    grid = voxelize(scene, GridSpec.for_domain(scene.domain, config.cell()))
    checks.append(("grid:wall_faces", len(grid.wall_faces) > 0, f"{len(grid.wall_faces)} lossy faces"))
    chip_index = scene.shapes.index(scene.shapes_labelled("chip")[0])
    chip = scene.shapes[chip_index]
    surface = 2 * (chip.extent[0] * chip.extent[1] + chip.extent[1] * chip.extent[2] + chip.extent[2] * chip.extent[0])
    chip_error = abs(grid.shape_cell_volume(chip_index) - chip.volume)
    checks.append(
        ("grid:chip_volume", chip_error <= max(grid.spec.h) * surface, f"error {chip_error:.3e} m^3 of {chip.volume:.3e}")
    )

    a, b, d = params.cavity_dims
    cavity = RectCavity(a, b, d, sigma=params.wall_sigma)
    f_max = config.modes_fmax_ghz * GHZ
    listed = [m.indices for m in rect_modes(cavity, f_max)]
    brute = []
    limit = 1 + int(2 * f_max * max(a, b, d) / C0)
    for m in range(limit + 1):
        for n in range(limit + 1):
            for p in range(limit + 1):
                if mode_kinds(m, n, p) and cavity.frequency(m, n, p) <= f_max:
                    brute.append((m, n, p))
    checks.append(("oracle:rect_modes", sorted(listed) == sorted(brute), f"{len(listed)} modes below {f_max:.4g} Hz"))

    f = config.t1_frequency
    q = 1.0e6
    checks.append(("loss:q_t1_roundtrip", math.isclose(t1_to_q(q_to_t1(q, f), f), q, rel_tol=1e-12), f"f={f:.4g} Hz"))
    delta = skin_depth(params.wall_sigma, f)
    rs = surface_resistance(params.wall_sigma, f)
    checks.append(("loss:rs_skin_depth", math.isclose(rs, 1.0 / (params.wall_sigma * delta), rel_tol=1e-12), f"Rs={rs:.4e} ohm"))
    checks.append(("loss:thermal_frequency", 20e9 < thermal_frequency(1.0) < 21e9, "1 K"))

    out.write_json(
        "scene.json",
        {
            **scene.to_dict(),
            "qpack_version": __version__,
            "config_sha256": config.digest(),
            "scene_sha256": scene.digest(),
        },
    )
    out.write_csv(
        "validation.csv",
        ("check", "passed", "detail"),
        [(name, ok, detail) for name, ok, detail in checks],
        [f"scene_sha256={scene.digest()}"],
    )
    if not report.ok:
        raise ConfigError(f"scene has {len(report.findings)} problems", "validate")
    if not all(ok for _, ok, _ in checks):
        raise AnalysisError("self-checks failed; see validation.csv")
    return 0


def _scene_comment(result: ScenarioResult) -> str:
    return f"scene_sha256={result.scene.digest()} dt={result.records.dt:.12g} n_steps={result.records.n_steps}"


def _designed_comment(designed: float) -> str:
    return f"designed_resonance_Hz={designed:.12g} (bare-chip reference run)"


def _cmd_modes(config: RunConfig, out: ArtifactManager, workers: int) -> int:
    params = config.package_params()
    a, b, d = params.cavity_dims
    cavity = RectCavity(a, b, d, sigma=params.wall_sigma)
    analytic = rect_modes(cavity, config.modes_fmax_ghz * GHZ)
    out.write_csv(
        "modes_analytic.csv",
        ("m", "n", "p", "f_Hz", "kinds"),
        [(m.m, m.n, m.p, m.f, "+".join(m.kinds)) for m in analytic],
        ["empty enclosure, perfect walls"],
    )
    scenario = Scenario.from_config(config)
    designed = reference_resonance(scenario, config.tracking_window)
    result = simulate(scenario, designed=designed)
    f_lo, f_hi = result.valid_range()
    peaks = find_peaks(result.sparams.s21_spectrum(), (f_lo, f_hi), config.min_prominence_db)
    table = mode_table(peaks, (f_lo, f_hi), designed, config.chip_window)
    out.write_csv("modes.csv", MODE_COLUMNS, _mode_rows(table), [_designed_comment(designed), _scene_comment(result)])
    return 0


def _cmd_s21(config: RunConfig, out: ArtifactManager, workers: int) -> int:
    scenario = Scenario.from_config(config)
    designed = reference_resonance(scenario, config.tracking_window)
    result = simulate(scenario, designed=designed)
    sp = result.sparams
    sel = sp.valid
    s21 = sp.s21_spectrum()
    comments = [f"gap_delta_mm={config.gap_delta_mm:g}", _designed_comment(designed), _scene_comment(result)]
    out.write_csv(
        "s21.csv",
        S21_COLUMNS,
        zip(sp.f[sel], s21.magnitude[sel], s21.db()[sel], sp.s11_spectrum().db()[sel]),
        comments,
    )
    out.write_csv("mode_table.csv", MODE_COLUMNS, _mode_rows(result.modes), comments)
    _write_probes(out, result.records, comments)
    return 0


def _write_probes(out: ArtifactManager, records: ProbeRecords, comments: Sequence[str]) -> None:
    """Time series: E at each probe cell centre (V/m), then port voltage (V) and current (A)."""
    columns = ["t_s"]
    series = [records.t]
    for name, values in records.probes.items():
        for a, axis in enumerate("xyz"):
            columns.append(f"{name}_E{axis}")
            series.append(values[:, a])
    for name in records.port_v:
        columns += [f"{name}_V", f"{name}_I"]
        series += [records.port_v[name], records.port_i[name]]
    out.write_csv("probes.csv", columns, np.column_stack(series), comments)


def _qcond_row(row: SweepRow, f_ref: float):
    return (
        row.gap_delta / MM,
        row.f0,
        row.q_cond,
        row.inv_q,
        _us(row.t1()),
        _us(row.t1(f_ref)),
        row.status,
    )


def _cmd_qcond(config: RunConfig, out: ArtifactManager, workers: int) -> int:
    scenario = Scenario.from_config(config)
    designed = reference_resonance(scenario, config.tracking_window)
    first = simulate(scenario, designed=designed)
    chip = next((m for m in first.modes if m.classification == CHIP_RESONANCE), None)
    chip = chip or pick_tracked_mode(first.peaks, designed, config.tracking_window)
    if chip is None:
        raise ModeLostError(f"no chip resonance within {config.tracking_window:.0%} of {designed / GHZ:.4g} GHz")
    loss = conductor_q(scenario, chip.f0)
    status = "infinite_q" if loss.q_cond is QFlag.INFINITE else "ok"
    row = SweepRow(scenario.params.gap_delta, loss.f0, loss.q_cond, status, loss.breakdown)
    comments = [
        f"T1 reference frequency {config.t1_frequency_ghz:g} GHz",
        _designed_comment(designed),
        _scene_comment(first),
    ]
    out.write_csv("qcond.csv", QCOND_COLUMNS, [_qcond_row(row, config.t1_frequency)], comments)
    out.write_csv("qcond_breakdown.csv", ("surface_group", "inv_Q"), sorted(loss.breakdown.items()), comments)
    return 0


def _cmd_sweep(config: RunConfig, out: ArtifactManager, workers: int) -> int:
    template = Scenario.from_config(config)
    deltas = [d * MM for d in config.sweep_deltas_mm]
    rows = gap_sweep_qcond(template, deltas, workers=workers, tracking_window=config.tracking_window)
    comments = [f"T1 reference frequency {config.t1_frequency_ghz:g} GHz"]
    out.write_csv("sweep_gap.csv", QCOND_COLUMNS, [_qcond_row(r, config.t1_frequency) for r in rows], comments)
    groups = sorted({g for r in rows for g in r.breakdown})
    out.write_csv(
        "sweep_gap_breakdown.csv",
        ("delta_mm", *groups),
        [(r.gap_delta / MM, *(r.breakdown.get(g) for g in groups)) for r in rows],
        comments,
    )
    if all(r.status == "mode_lost" for r in rows):
        raise ModeLostError("chip mode lost at every gap depth")
    return 0


def _cmd_field_slice(config: RunConfig, out: ArtifactManager, workers: int) -> int:
    scenario = Scenario.from_config(config)
    f = config.slice_frequency
    result = simulate(scenario, dft_frequencies=[f])
    spec = result.grid.spec
    normal = PLANES[config.slice_plane]
    if config.slice_position_mm is None:
        index = spec.dims[normal] // 2
    else:
        point = [0.0, 0.0, 0.0]
        point[normal] = config.slice_position_mm * MM
        index = spec.cell_index(tuple(point))[normal]
    values = field_slice(result.state, config.slice_plane, index, "|E|", frequency=f)
    rows_axis, cols_axis = config.slice_plane[0], config.slice_plane[1]
    comments = [
        f"|E| phasor amplitude (V/m) at {config.slice_frequency_ghz:g} GHz",
        f"plane={config.slice_plane} cell_index={index} rows={rows_axis} cols={cols_axis}",
        f"cell_mm={','.join(f'{h / MM:.6g}' for h in spec.h)}",
        _scene_comment(result),
    ]
    out.write_grid(f"field_slice_{config.slice_plane}.csv", values, comments)
    materials = result.grid.material_slice(normal, index)
    if config.slice_plane == "zx":
        materials = materials.T
    legend = " ".join(f"{i}={name}" for i, name in enumerate(result.grid.material_names()))
    out.write_grid(f"material_slice_{config.slice_plane}.csv", materials, [*comments[1:3], f"materials {legend}"])
    return 0


_HANDLERS = {
    "validate": _cmd_validate,
    "modes": _cmd_modes,
    "s21": _cmd_s21,
    "qcond": _cmd_qcond,
    "sweep-gap": _cmd_sweep,
    "field-slice": _cmd_field_slice,
}


def run_command(
    command: str,
    config: RunConfig,
    out_dir: str,
    workers: int = 1,
    file_operations: Optional[FileOperations] = None,
) -> CommandResult:
    """Run one command; artifacts land in out_dir. Errors propagate as QpackError subclasses."""
    if command not in _HANDLERS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}", "command")
    header = [f"qpack {__version__} command={command}", f"config_sha256={config.digest()}"]
    out = ArtifactManager(file_operations or DefaultFileOperations(), out_dir, header)
    exit_code = _HANDLERS[command](config, out, workers)
    if out.errors:
        raise ArtifactError("; ".join(f"{c.filepath}: {c.error}" for c in out.errors))
    for ctx in out.written:
        logging.info("Wrote %s", ctx.filepath)
    return CommandResult(command=command, exit_code=exit_code, artifacts=[c.filepath for c in out.written])
