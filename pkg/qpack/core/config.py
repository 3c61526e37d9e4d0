"""
Run configuration: strict JSON in mm and GHz, converted to SI in one place.
"""

import hashlib
import json
import logging
import os
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from qpack.core.errors import ConfigError, InvalidParameterError, QpackError
from qpack.core.fdtd import SourceSpec
from qpack.core.grid import GridSpec, voxelize
from qpack.core.materials import LIBRARY
from qpack.core.scene import PackageParams, TraceSpec, build_package

MM = 1e-3
GHZ = 1e9
WORKERS_ENV = "QPACK_WORKERS"
CELLS_PER_WAVELENGTH = 20


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


class TraceConfig(_Section):
    length_mm: float = Field(7.5, gt=0, description="Strip length of the meander resonator")
    width_mm: float = Field(0.5, gt=0, description="Centre-strip width")
    slot_mm: float = Field(0.25, gt=0, description="Strip-to-ground slot width")
    coupling_gap_mm: float = Field(0.5, gt=0, description="Feed-to-resonator edge spacing")
    coupling_length_mm: float = Field(0.75, gt=0, description="Length of each feed running alongside the resonator")
    meander_pitch_mm: float = Field(1.25, gt=0)
    runs: int = Field(3, ge=1)


class SourceConfig(_Section):
    center_ghz: float = Field(12.0, gt=0)
    bandwidth_ghz: float = Field(20.0, gt=0, description="Full width of the -20 dB band")
    amplitude_v: float = Field(1.0, gt=0)


def _check_length(value: List[float], n: int) -> List[float]:
    if len(value) != n:
        raise ValueError(f"expected {n} values, got {len(value)}")
    if any(v <= 0 for v in value):
        raise ValueError("values must be positive")
    return value


class RunConfig(_Section):
    """Every knob of a run. Unknown keys are rejected."""

    cavity_mm: List[float] = Field(default_factory=lambda: [16.0, 16.0, 7.0])
    wall_material: str = "gold_plated_copper"
    wall_sigma: float = Field(4.5e9, gt=0, description="Wall conductivity in S/m")
    pedestal_mm: List[float] = Field(default_factory=lambda: [7.0, 7.0])
    pedestal_height_mm: float = Field(4.2, gt=0)
    chip_mm: List[float] = Field(default_factory=lambda: [7.0, 7.0, 0.35])
    substrate: Literal["silicon", "sapphire"] = "silicon"
    chip_eps_r: Optional[float] = Field(None, ge=1.0)
    gap_delta_mm: float = 0.0
    post_mm: float = Field(0.5, gt=0)
    ground_margin_mm: float = Field(0.5, gt=0, description="Ground plane left between the feed ends and the chip edge")
    port_impedance_ohm: float = Field(50.0, gt=0)
    trace: TraceConfig = Field(default_factory=TraceConfig)

    cell_mm: List[float] = Field(default_factory=lambda: [0.25, 0.25, 0.175])
    source: SourceConfig = Field(default_factory=SourceConfig)
    n_steps: int = Field(48000, ge=1)
    progress_every: int = Field(1000, ge=0)

    band_ghz: List[float] = Field(default_factory=lambda: [4.0, 8.0])
    window: Literal["rect", "hann", "decay"] = "decay"
    pad_factor: int = Field(4, ge=1)
    min_prominence_db: float = Field(6.0, gt=0)
    floor_db: float = Field(-40.0, lt=0)
    chip_window: Optional[float] = Field(
        None, gt=0, description="Widen chip-resonance classification beyond 3 linewidths to this relative window"
    )
    tracking_window: float = Field(0.15, gt=0, description="Relative window for following the chip mode")
    t1_frequency_ghz: float = Field(4.8, gt=0)
    loss_bandwidth_ghz: float = Field(2.0, gt=0, description="-20 dB width of the loss-pass excitation")

    sweep_deltas_mm: List[float] = Field(
        default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 3.8]
    )
    slice_plane: Literal["xy", "yz", "zx"] = "zx"
    slice_position_mm: Optional[float] = None
    slice_frequency_ghz: float = Field(5.9, gt=0)
    modes_fmax_ghz: float = Field(20.0, gt=0)
    workers: Optional[int] = Field(None, ge=1)

    @field_validator("cavity_mm", "chip_mm", "cell_mm")
    @classmethod
    def _three(cls, value: List[float]) -> List[float]:
        return _check_length(value, 3)

    @field_validator("pedestal_mm")
    @classmethod
    def _two(cls, value: List[float]) -> List[float]:
        return _check_length(value, 2)

    @field_validator("band_ghz")
    @classmethod
    def _band(cls, value: List[float]) -> List[float]:
        _check_length(value, 2)
        if value[0] >= value[1]:
            raise ValueError("band must be [f_lo, f_hi] with f_lo < f_hi")
        return value

    @field_validator("gap_delta_mm")
    @classmethod
    def _gap(cls, value: float) -> float:
        if value < 0:
            raise ValueError("gap depth must be >= 0")
        return value

    @field_validator("sweep_deltas_mm")
    @classmethod
    def _deltas(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("sweep needs at least one gap depth")
        if any(v < 0 for v in value):
            raise ValueError("gap depths must be >= 0")
        return sorted(value)

    @field_validator("wall_material")
    @classmethod
    def _known_material(cls, value: str) -> str:
        if value not in LIBRARY:
            raise ValueError(f"unknown material {value!r}")
        return value

    # SI boundary

    def package_params(self, gap_delta_mm: Optional[float] = None) -> PackageParams:
        tr = self.trace
        delta = self.gap_delta_mm if gap_delta_mm is None else gap_delta_mm
        return PackageParams(
            cavity_dims=tuple(v * MM for v in self.cavity_mm),
            wall_material=self.wall_material,
            wall_sigma=self.wall_sigma,
            pedestal_dims=tuple(v * MM for v in self.pedestal_mm),
            pedestal_height=self.pedestal_height_mm * MM,
            chip_dims=tuple(v * MM for v in self.chip_mm),
            substrate=self.substrate,
            chip_eps_r=self.chip_eps_r,
            gap_delta=delta * MM,
            post_cross_section=self.post_mm * MM,
            trace=TraceSpec(
                length=tr.length_mm * MM,
                width=tr.width_mm * MM,
                slot=tr.slot_mm * MM,
                coupling_gap=tr.coupling_gap_mm * MM,
                coupling_length=tr.coupling_length_mm * MM,
                meander_pitch=tr.meander_pitch_mm * MM,
                runs=tr.runs,
            ),
            port_impedance=self.port_impedance_ohm,
            ground_margin=self.ground_margin_mm * MM,
            band_of_interest=self.band(),
        )

    def cell(self) -> Tuple[float, float, float]:
        return tuple(v * MM for v in self.cell_mm)

    def grid_spec(self, params: Optional[PackageParams] = None) -> GridSpec:
        scene = build_package(params or self.package_params())
        return GridSpec.for_domain(scene.domain, self.cell())

    def source_spec(self, port: str = "p1") -> SourceSpec:
        return SourceSpec(
            kind="port",
            port=port,
            center_frequency=self.source.center_ghz * GHZ,
            bandwidth=self.source.bandwidth_ghz * GHZ,
            amplitude=self.source.amplitude_v,
        )

    def band(self) -> Tuple[float, float]:
        return self.band_ghz[0] * GHZ, self.band_ghz[1] * GHZ

    @property
    def t1_frequency(self) -> float:
        return self.t1_frequency_ghz * GHZ

    @property
    def slice_frequency(self) -> float:
        return self.slice_frequency_ghz * GHZ

    @property
    def loss_bandwidth(self) -> float:
        return self.loss_bandwidth_ghz * GHZ

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def check(self) -> None:
        """Run the geometry invariants without simulating; raises ConfigError."""
        try:
            params = self.package_params()
            scene = build_package(params)
            voxelize(scene, self.grid_spec(params))
        except QpackError as e:
            raise ConfigError(str(e), "package") from e
        eps_max = max(m.eps_r for m in scene.materials if not m.is_conductor)
        fine = GridSpec.for_band(scene.domain, self.band()[1], eps_max, CELLS_PER_WAVELENGTH)
        if any(c > h * (1 + 1e-9) for c, h in zip(self.cell(), fine.h)):
            logging.warning(
                "cell_mm %s is coarser than %d cells per wavelength at %.4g GHz with eps_r %.4g (%.4g mm)",
                self.cell_mm,
                CELLS_PER_WAVELENGTH,
                self.band_ghz[1],
                eps_max,
                fine.h[0] / MM,
            )
        for delta in self.sweep_deltas_mm:
            try:
                params = self.package_params(delta)
                voxelize(build_package(params), self.grid_spec(params))
            except QpackError as e:
                raise ConfigError(str(e), "sweep_deltas_mm") from e


def _error_path(err: dict) -> str:
    return ".".join(str(part) for part in err["loc"]) or "<root>"


def parse_config(document: Union[str, bytes, dict]) -> RunConfig:
    """Validate a JSON document (text or already-decoded mapping) into a RunConfig."""
    try:
        if isinstance(document, (str, bytes)):
            config = RunConfig.model_validate_json(document)
        else:
            config = RunConfig.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(first["msg"], _error_path(first)) from e
    except InvalidParameterError as e:
        raise ConfigError(str(e)) from e
    config.check()
    return config


def resolve_workers(flag: Optional[int], config: RunConfig) -> int:
    """Worker count: --workers flag, then QPACK_WORKERS, then the config, then the CPU count."""
    if flag is not None:
        if flag < 1:
            raise ConfigError("must be >= 1", "--workers")
        return flag
    env = os.getenv(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError as e:
            raise ConfigError(f"not an integer: {env!r}", WORKERS_ENV) from e
        if value < 1:
            raise ConfigError("must be >= 1", WORKERS_ENV)
        return value
    if config.workers is not None:
        return config.workers
    return os.cpu_count() or 1
