"""
Parametric package geometry: prioritized axis-aligned boxes, ports and probes.

All lengths are in metres. The cavity interior spans [0, Lx] x [0, Ly] x [0, Lz] with the
floor at z = 0.
"""

import hashlib
import json
import math
from typing import Dict, List, Literal, NamedTuple, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.optimize import brentq
from scipy.special import ellipk

from qpack.core.constants import C0, EPS0
from qpack.core.errors import InvalidParameterError
from qpack.core.materials import ALUMINIUM, LIBRARY, VACUUM, Material, material_by_name, with_conductivity

Vec3 = Tuple[float, float, float]

# Coordinates closer than this are treated as equal (metres).
GEOMETRY_TOL = 1e-12


def _parameter_error(exc: ValidationError) -> InvalidParameterError:
    for err in exc.errors():
        cause = (err.get("ctx") or {}).get("error")
        if isinstance(cause, InvalidParameterError):
            return cause
    first = exc.errors()[0]
    where = ".".join(str(part) for part in first["loc"])
    return InvalidParameterError(f"{exc.title}.{where}: {first['msg']}" if where else f"{exc.title}: {first['msg']}")


class GeometryModel(BaseModel):
    """Frozen value type. Fields may also be given positionally, in declaration order."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    def __init__(self, *args, **data):
        names = list(type(self).model_fields)
        if len(args) > len(names):
            raise TypeError(f"{type(self).__name__} takes at most {len(names)} positional arguments")
        for name, value in zip(names, args):
            if name in data:
                raise TypeError(f"{type(self).__name__} got multiple values for {name!r}")
            data[name] = value
        try:
            super().__init__(**data)
        except ValidationError as e:
            raise _parameter_error(e) from e

    def _copy(self, **changes):
        """Validated copy with some fields replaced."""
        return type(self)(**{**dict(self), **changes})


class Box(GeometryModel):
    """Axis-aligned box. Sheets may have zero thickness along exactly one axis."""

    min_corner: Vec3
    max_corner: Vec3
    material: str
    priority: int = 0
    label: str = ""
    sheet: bool = False

    @model_validator(mode="after")
    def _check_corners(self) -> "Box":
        lo, hi = self.min_corner, self.max_corner
        if any(h < l for l, h in zip(lo, hi)):
            raise InvalidParameterError(f"box {self.label!r}: min_corner must not exceed max_corner")
        flat = [a for a in range(3) if hi[a] == lo[a]]
        if self.sheet and len(flat) > 1:
            raise InvalidParameterError(f"sheet {self.label!r} is degenerate in more than one axis")
        if not self.sheet and flat:
            raise InvalidParameterError(f"box {self.label!r}: min_corner < max_corner required")
        return self

    @property
    def extent(self) -> Vec3:
        return tuple(h - l for l, h in zip(self.min_corner, self.max_corner))

    @property
    def volume(self) -> float:
        ex, ey, ez = self.extent
        return ex * ey * ez

    @property
    def center(self) -> Vec3:
        return tuple(0.5 * (l + h) for l, h in zip(self.min_corner, self.max_corner))

    @property
    def sheet_axis(self) -> int:
        """Normal axis of a sheet: its thinnest dimension."""
        ext = self.extent
        return min(range(3), key=lambda a: ext[a])

    def contains_point(self, point: Vec3, tol: float = GEOMETRY_TOL) -> bool:
        return all(l - tol <= p <= h + tol for p, l, h in zip(point, self.min_corner, self.max_corner))

    def contains_box(self, other: "Box", tol: float = GEOMETRY_TOL) -> bool:
        return self.contains_point(other.min_corner, tol) and self.contains_point(other.max_corner, tol)

    def overlaps(self, other: "Box") -> bool:
        """True when the boxes share a region of positive measure (touching does not count)."""
        for a in range(3):
            lo = max(self.min_corner[a], other.min_corner[a])
            hi = min(self.max_corner[a], other.max_corner[a])
            if hi - lo > GEOMETRY_TOL:
                continue
            coplanar = abs(hi - lo) <= GEOMETRY_TOL and self.extent[a] == 0 and other.extent[a] == 0
            if not coplanar:
                return False
        return True


class PortSpec(GeometryModel):
    """Lumped port spanning the straight segment start -> end."""

    name: str
    start: Vec3
    end: Vec3
    impedance: float = 50.0

    @model_validator(mode="after")
    def _check_segment(self) -> "PortSpec":
        moving = [a for a in range(3) if self.start[a] != self.end[a]]
        if len(moving) != 1:
            raise InvalidParameterError(f"port {self.name!r} must be parallel to one axis")
        if self.impedance <= 0:
            raise InvalidParameterError(f"port {self.name!r} needs a positive impedance")
        return self

    @property
    def axis(self) -> int:
        return next(a for a in range(3) if self.start[a] != self.end[a])


class ProbeSpec(GeometryModel):
    """Point probe."""

    name: str
    position: Vec3


def _k_ratio(k: float) -> float:
    """K(k) / K(k') for elliptic modulus k."""
    return float(ellipk(k * k) / ellipk(1.0 - k * k))


class TraceSpec(GeometryModel):
    """
    Coplanar-waveguide half-wave meander resonator, side-coupled to two open-ended feed lines.

    The centre strip has width `width` and is separated from the chip ground plane by slots of
    width `slot`. Each feed runs parallel to an end run of the meander for `coupling_length`,
    `coupling_gap` away edge to edge.
    """

    length: float = 7.5e-3
    width: float = 0.5e-3
    slot: float = 0.25e-3
    coupling_gap: float = 0.5e-3
    coupling_length: float = 0.75e-3
    meander_pitch: float = 1.25e-3
    runs: int = 3

    @model_validator(mode="after")
    def _check_shape(self) -> "TraceSpec":
        for name in ("length", "width", "slot", "coupling_gap", "coupling_length", "meander_pitch"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"trace {name} must be positive")
        if self.runs < 1 or self.runs % 2 == 0:
            raise InvalidParameterError("trace runs must be a positive odd number")
        if self.runs > 1 and self.meander_pitch < self.width + 2 * self.slot:
            raise InvalidParameterError("trace meander_pitch must leave room for both slots")
        if self.coupling_gap < 2 * self.slot:
            raise InvalidParameterError("trace coupling_gap must be at least two slot widths")
        if self.run_length <= 0:
            raise InvalidParameterError("trace length too short for its meander")
        if self.coupling_length > self.run_length:
            raise InvalidParameterError("trace coupling_length exceeds one meander run")
        return self

    @property
    def run_length(self) -> float:
        return (self.length - (self.runs - 1) * (self.meander_pitch - self.width)) / self.runs

    def effective_permittivity(self, eps_r: float, thickness: float) -> float:
        """Quasi-static CPW permittivity on a substrate of finite thickness, air above."""
        k0 = self.width / (self.width + 2 * self.slot)
        k1 = math.sinh(math.pi * self.width / (4 * thickness)) / math.sinh(
            math.pi * (self.width + 2 * self.slot) / (4 * thickness)
        )
        return 1.0 + 0.5 * (eps_r - 1.0) * _k_ratio(k1) / _k_ratio(k0)

    def impedance(self, eps_r: float, thickness: float) -> float:
        k0 = self.width / (self.width + 2 * self.slot)
        return 30.0 * math.pi / (math.sqrt(self.effective_permittivity(eps_r, thickness)) * _k_ratio(k0))

    def coupling_capacitance(self, eps_r: float, thickness: float) -> float:
        """Feed-to-resonator capacitance of the parallel section, as a pair of coplanar strips."""
        k = self.coupling_gap / (self.coupling_gap + 2 * self.width)
        return EPS0 * self.effective_permittivity(eps_r, thickness) / _k_ratio(k) * self.coupling_length

    def designed_frequency(self, eps_r: float, thickness: float, port_impedance: float = 50.0) -> float:
        """
        Fundamental of the resonator including open-end extension and the pull of both couplers.

        Each end sees the coupling capacitance in series with the port load; resonance is where
        beta * L = pi - 2 atan(B Z) for the resulting end susceptance B.
        """
        eps_eff = self.effective_permittivity(eps_r, thickness)
        z_r = self.impedance(eps_r, thickness)
        c_c = self.coupling_capacitance(eps_r, thickness)
        total = self.length + 2 * (self.width + 2 * self.slot) / 4
        v = C0 / math.sqrt(eps_eff)

        def mismatch(f: float) -> float:
            wc = 2 * math.pi * f * c_c
            b = wc / (1.0 + (wc * port_impedance) ** 2)
            return 2 * math.pi * f * total / v - math.pi + 2 * math.atan(b * z_r)

        f_open = v / (2 * total)
        return float(brentq(mismatch, 1e-3 * f_open, f_open))


class PackageParams(GeometryModel):
    """Parameters of the package model. Defaults are documented assumptions."""

    cavity_dims: Vec3 = (16e-3, 16e-3, 7.0e-3)
    wall_material: str = "gold_plated_copper"
    wall_sigma: float = 4.5e9
    pedestal_dims: Tuple[float, float] = (7e-3, 7e-3)
    pedestal_height: float = 4.2e-3
    chip_dims: Vec3 = (7e-3, 7e-3, 0.35e-3)
    substrate: str = "silicon"
    chip_eps_r: Optional[float] = None
    gap_delta: float = 0.0
    post_cross_section: float = 0.5e-3
    mounting: Literal["pedestal", "suspended"] = "pedestal"
    trace: TraceSpec = Field(default_factory=TraceSpec)
    port_impedance: float = 50.0
    ground_margin: float = 0.5e-3
    band_of_interest: Tuple[float, float] = (4e9, 8e9)

    @model_validator(mode="after")
    def _check_package(self) -> "PackageParams":
        lx, ly, lz = self.cavity_dims
        cw, cl, ct = self.chip_dims
        px, py = self.pedestal_dims
        if self.gap_delta < 0:
            raise InvalidParameterError(f"gap_delta must be >= 0, got {self.gap_delta}")
        if min(self.cavity_dims) <= 0 or min(self.chip_dims) <= 0 or min(px, py) <= 0:
            raise InvalidParameterError("cavity, chip and pedestal dimensions must be positive")
        if self.pedestal_height <= 0:
            raise InvalidParameterError("pedestal_height must be positive")
        if cw >= lx or cl >= ly or self.pedestal_height + ct >= lz:
            raise InvalidParameterError("chip must fit strictly inside the cavity")
        if px > lx or py > ly:
            raise InvalidParameterError("pedestal footprint exceeds the cavity")
        if cw > px or cl > py:
            raise InvalidParameterError("chip footprint exceeds the pedestal footprint")
        if self.gap_delta > self.pedestal_height:
            raise InvalidParameterError("gap_delta deeper than the pedestal")
        if self.post_cross_section <= 0 or 2 * self.post_cross_section >= min(cw, cl):
            raise InvalidParameterError("post_cross_section must be positive and below half the chip size")
        if self.wall_sigma <= 0:
            raise InvalidParameterError("wall_sigma must be positive")
        if self.port_impedance <= 0 or self.ground_margin <= 0:
            raise InvalidParameterError("port impedance and ground margin must be positive")
        lo, hi = self.band_of_interest
        if not 0 < lo < hi:
            raise InvalidParameterError("band_of_interest must satisfy 0 < f_lo < f_hi")
        if self.substrate not in LIBRARY:
            raise InvalidParameterError(f"unknown substrate {self.substrate!r}")
        _check_layout(self, trace_layout(self))
        return self

    @property
    def substrate_material(self) -> Material:
        base = material_by_name(self.substrate)
        if self.chip_eps_r is None:
            return base
        return base.model_copy(update={"eps_r": self.chip_eps_r})

    @property
    def chip_top(self) -> float:
        return self.pedestal_height + self.chip_dims[2]

    def designed_resonance(self) -> float:
        return self.trace.designed_frequency(self.substrate_material.eps_r, self.chip_dims[2], self.port_impedance)

    def with_gap(self, gap_delta: float) -> "PackageParams":
        return self._copy(gap_delta=gap_delta)

    def bare_chip(self) -> "PackageParams":
        """Same chip and enclosure with nothing underneath: the chip's own resonance reference."""
        return self._copy(mounting="suspended", gap_delta=0.0)


class TraceLayout(NamedTuple):
    """In-plane coordinates of the resonator and its feeds on the chip top."""

    xa: float
    xb: float
    ys: Tuple[float, ...]
    x_in: float
    x_out: float
    y_in: float
    y_out: float
    chip: Tuple[float, float, float, float]


def trace_layout(params: PackageParams) -> TraceLayout:
    lx, ly, _ = params.cavity_dims
    cw, cl, _ = params.chip_dims
    tr = params.trace
    cx, cy = lx / 2, ly / 2
    n, p, w = tr.runs, tr.meander_pitch, tr.width
    ys = tuple(cy + (k - (n - 1) / 2) * p for k in range(n))
    chip = (cx - cw / 2, cy - cl / 2, cx + cw / 2, cy + cl / 2)
    return TraceLayout(
        xa=cx - tr.run_length / 2,
        xb=cx + tr.run_length / 2,
        ys=ys,
        x_in=chip[0] + params.ground_margin + tr.slot,
        x_out=chip[2] - params.ground_margin - tr.slot,
        y_in=ys[0] - w - tr.coupling_gap,
        y_out=ys[-1] + w + tr.coupling_gap,
        chip=chip,
    )


def _check_layout(params: PackageParams, lay: TraceLayout) -> None:
    tr = params.trace
    m = params.ground_margin
    x0, y0, x1, y1 = lay.chip
    half = tr.width / 2 + tr.slot
    if lay.xa - tr.slot < x0 + m or lay.xb + tr.slot > x1 - m:
        raise InvalidParameterError("trace does not fit on the chip along x")
    if lay.y_in - half < y0 + m or lay.y_out + half > y1 - m:
        raise InvalidParameterError("trace and feeds do not fit on the chip along y")
    if lay.x_in >= lay.xa + tr.coupling_length or lay.x_out <= lay.xb - tr.coupling_length:
        raise InvalidParameterError("feed lines do not reach their couplers")


class Scene(GeometryModel):
    """Simulation region, shapes in paint order, ports, probes and the materials they use."""

    domain: Box
    shapes: Tuple[Box, ...] = ()
    ports: Tuple[PortSpec, ...] = ()
    probes: Tuple[ProbeSpec, ...] = ()
    band_of_interest: Tuple[float, float] = (4e9, 8e9)
    materials: Tuple[Material, ...] = (VACUUM,)
    wall_material: str = "vacuum"
    designed_resonance: Optional[float] = None

    @property
    def material_map(self) -> Dict[str, Material]:
        return {m.name: m for m in self.materials}

    def material(self, name: str) -> Material:
        try:
            return self.material_map[name]
        except KeyError as e:
            raise InvalidParameterError(f"scene has no material {name!r}") from e

    def shapes_labelled(self, prefix: str) -> List[Box]:
        return [s for s in self.shapes if s.label.startswith(prefix)]

    def probe(self, name: str) -> ProbeSpec:
        for probe in self.probes:
            if probe.name == name:
                return probe
        raise InvalidParameterError(f"scene has no probe {name!r}")

    def without_ports(self) -> "Scene":
        return self._copy(ports=())

    def to_dict(self) -> dict:
        data = self.model_dump(mode="json")
        data["materials"] = sorted(data["materials"], key=lambda m: m["name"])
        return data

    def to_json(self) -> str:
        """Canonical JSON: sorted keys, no whitespace."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


class Finding(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: str
    message: str
    index: Optional[int] = None


class ValidationReport(BaseModel):
    findings: List[Finding] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def of_kind(self, kind: str) -> List[Finding]:
        return [f for f in self.findings if f.kind == kind]


def _sheet(x0: float, y0: float, x1: float, y1: float, z: float, material: str, priority: int, label: str) -> Box:
    return Box((x0, y0, z), (x1, y1, z), material, priority, label, True)


def _trace_boxes(params: PackageParams) -> List[Box]:
    """Ground plane, slot apertures and centre strips; later sheets overwrite earlier ones."""
    tr = params.trace
    lay = trace_layout(params)
    z = params.chip_top
    w, s, lc = tr.width, tr.slot, tr.coupling_length
    half = w / 2 + s
    x0, y0, x1, y1 = lay.chip
    xa, xb, ys = lay.xa, lay.xb, lay.ys
    jogs = [xb - w if k % 2 == 0 else xa for k in range(tr.runs - 1)]

    def slot(*corners, label):
        return _sheet(*corners, z, VACUUM.name, 6, label)

    def strip(*corners, label):
        return _sheet(*corners, z, ALUMINIUM.name, 7, label)

    boxes = [_sheet(x0, y0, x1, y1, z, ALUMINIUM.name, 5, "ground")]
    boxes += [slot(xa - s, y - half, xb + s, y + half, label=f"slot_run_{k}") for k, y in enumerate(ys)]
    if tr.meander_pitch > w + 2 * s:
        for k, xj in enumerate(jogs):
            boxes.append(slot(xj - s, ys[k] + half, xj + w + s, ys[k + 1] - half, label=f"slot_jog_{k}"))
    boxes.append(slot(lay.x_in - s, lay.y_in - half, xa + lc + s, lay.y_in + half, label="slot_feed_in"))
    boxes.append(slot(xb - lc - s, lay.y_out - half, lay.x_out + s, lay.y_out + half, label="slot_feed_out"))
    if tr.coupling_gap > 2 * s:
        boxes.append(slot(xa, lay.y_in + half, xa + lc, ys[0] - half, label="slot_coupler_in"))
        boxes.append(slot(xb - lc, ys[-1] + half, xb, lay.y_out - half, label="slot_coupler_out"))

    boxes += [strip(xa, y - w / 2, xb, y + w / 2, label=f"trace_run_{k}") for k, y in enumerate(ys)]
    for k, xj in enumerate(jogs):
        boxes.append(strip(xj, ys[k] + w / 2, xj + w, ys[k + 1] - w / 2, label=f"trace_jog_{k}"))
    boxes.append(strip(lay.x_in, lay.y_in - w / 2, xa + lc, lay.y_in + w / 2, label="feed_in"))
    boxes.append(strip(xb - lc, lay.y_out - w / 2, lay.x_out, lay.y_out + w / 2, label="feed_out"))
    return boxes


def build_package(params: PackageParams) -> Scene:
    """Build the package scene: pedestal (recessed by gap_delta), posts, chip, resonator, feeds and ports."""
    lx, ly, lz = params.cavity_dims
    cw, cl, ct = params.chip_dims
    px, py = params.pedestal_dims
    cx, cy = lx / 2, ly / 2
    h = params.pedestal_height
    delta = params.gap_delta
    wall = with_conductivity(material_by_name(params.wall_material), params.wall_sigma)
    substrate = params.substrate_material
    x0, x1, y0, y1 = cx - cw / 2, cx + cw / 2, cy - cl / 2, cy + cl / 2

    shapes: List[Box] = []
    if params.mounting == "pedestal":
        shapes.append(Box((cx - px / 2, cy - py / 2, 0.0), (cx + px / 2, cy + py / 2, h), wall.name, 1, "pedestal"))
        if delta > 0:
            shapes.append(Box((x0, y0, h - delta), (x1, y1, h), VACUUM.name, 2, "gap"))
            a = params.post_cross_section
            for k, (px0, py0) in enumerate(((x0, y0), (x1 - a, y0), (x0, y1 - a), (x1 - a, y1 - a))):
                shapes.append(Box((px0, py0, h - delta), (px0 + a, py0 + a, h), wall.name, 3, f"post_{k}"))
    shapes.append(Box((x0, y0, h), (x1, y1, h + ct), substrate.name, 4, "chip"))
    shapes.extend(_trace_boxes(params))

    tr = params.trace
    lay = trace_layout(params)
    z = params.chip_top
    w, s = tr.width, tr.slot
    ports = (
        PortSpec("p1", (lay.x_in, lay.y_in - w / 2 - s, z), (lay.x_in, lay.y_in - w / 2, z), params.port_impedance),
        PortSpec("p2", (lay.x_out, lay.y_out + w / 2, z), (lay.x_out, lay.y_out + w / 2 + s, z), params.port_impedance),
    )
    probes = (
        ProbeSpec("resonator", (lay.xa + s, lay.ys[0] + w / 2 + s / 2, z)),
        ProbeSpec("corner", (2e-3, 2e-3, lz - 2e-3)),
    )
    materials = {m.name: m for m in (VACUUM, wall, substrate, ALUMINIUM)}
    return Scene(
        domain=Box((0.0, 0.0, 0.0), (lx, ly, lz), VACUUM.name, 0, "cavity"),
        shapes=tuple(shapes),
        ports=ports,
        probes=probes,
        band_of_interest=params.band_of_interest,
        materials=tuple(materials.values()),
        wall_material=wall.name,
        designed_resonance=params.designed_resonance(),
    )


def validate_scene(scene: Scene) -> ValidationReport:
    """Collect out-of-domain shapes, dangling material references and ambiguous overlaps."""
    report = ValidationReport()
    known = scene.material_map
    if scene.wall_material not in known:
        report.findings.append(Finding(kind="dangling_material", message=f"wall material {scene.wall_material!r}"))
    for idx, shape in enumerate(scene.shapes):
        if not scene.domain.contains_box(shape):
            report.findings.append(Finding(kind="out_of_domain", message=f"shape {shape.label!r} leaves the domain", index=idx))
        if shape.material not in known:
            report.findings.append(
                Finding(kind="dangling_material", message=f"shape {shape.label!r} uses unknown {shape.material!r}", index=idx)
            )
        elif shape.sheet and not (known[shape.material].is_pec or known[shape.material].is_void):
            report.findings.append(
                Finding(kind="sheet_material", message=f"sheet {shape.label!r} is neither a conductor nor an aperture", index=idx)
            )
    for i, a in enumerate(scene.shapes):
        for j in range(i + 1, len(scene.shapes)):
            b = scene.shapes[j]
            if a.priority == b.priority and a.overlaps(b):
                report.findings.append(
                    Finding(
                        kind="ambiguous_overlap",
                        message=f"shapes {a.label!r} and {b.label!r} overlap at priority {a.priority}",
                        index=j,
                    )
                )
    for port in scene.ports:
        if not (scene.domain.contains_point(port.start) and scene.domain.contains_point(port.end)):
            report.findings.append(Finding(kind="out_of_domain", message=f"port {port.name!r} leaves the domain"))
    for probe in scene.probes:
        if not scene.domain.contains_point(probe.position):
            report.findings.append(Finding(kind="out_of_domain", message=f"probe {probe.name!r} leaves the domain"))
    return report
