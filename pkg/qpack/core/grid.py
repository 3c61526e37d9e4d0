"""
Rectilinear Yee grid and voxelization of a scene onto it.

Cells are indexed (i, j, k) along (x, y, z). Each cell takes the material of the highest-priority
shape containing its centre. Perfect-conductor sheets become blocked cell faces instead of cells;
vacuum sheets painted after them reopen the faces they cover (slots in a ground plane).
"""

import logging
import math
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import model_validator

from qpack.core.constants import C0
from qpack.core.errors import InvalidParameterError, PlacementError, UnderResolutionError
from qpack.core.materials import GOLD_PLATED_COPPER, VACUUM, Material
from qpack.core.scene import Box, GeometryModel, ProbeSpec, Scene, Vec3

MIN_CELLS = 8
AXES = "xyz"


class GridSpec(GeometryModel):
    """Uniform spacing per axis, cell counts and the position of node (0, 0, 0)."""

    h: Vec3
    dims: Tuple[int, int, int]
    origin: Vec3 = (0.0, 0.0, 0.0)

    @model_validator(mode="after")
    def _check_lattice(self) -> "GridSpec":
        if any(not h > 0 for h in self.h):
            raise InvalidParameterError(f"grid spacing must be positive, got {self.h}")
        if any(n < MIN_CELLS for n in self.dims):
            raise InvalidParameterError(f"grid needs at least {MIN_CELLS} cells per axis, got {self.dims}")
        return self

    @classmethod
    def for_domain(cls, domain: Box, cell: Vec3) -> "GridSpec":
        """Largest uniform spacing not above `cell` that tiles the domain exactly."""
        extent = domain.extent
        dims = tuple(max(MIN_CELLS, math.ceil(e / c - 1e-9)) for e, c in zip(extent, cell))
        h = tuple(e / n for e, n in zip(extent, dims))
        return cls(h=h, dims=dims, origin=domain.min_corner)

    @classmethod
    def for_band(cls, domain: Box, f_max: float, eps_max: float, cells_per_wavelength: int = 20) -> "GridSpec":
        """Spacing resolving f_max with the given number of cells per wavelength in the densest dielectric."""
        h = C0 / (f_max * math.sqrt(eps_max) * cells_per_wavelength)
        return cls.for_domain(domain, (h, h, h))

    @property
    def extent(self) -> Vec3:
        return tuple(h * n for h, n in zip(self.h, self.dims))

    @property
    def cell_volume(self) -> float:
        return self.h[0] * self.h[1] * self.h[2]

    def nodes(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h[axis] * np.arange(self.dims[axis] + 1)

    def centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h[axis] * (np.arange(self.dims[axis]) + 0.5)

    def node_index(self, axis: int, x: float) -> int:
        """Nearest node plane, clipped to the grid."""
        idx = int(math.floor((x - self.origin[axis]) / self.h[axis] + 0.5))
        return min(max(idx, 0), self.dims[axis])

    def cell_index(self, point: Vec3) -> Tuple[int, int, int]:
        """Cell containing the point, clipped to the grid."""
        out = []
        for a in range(3):
            idx = int(math.floor((point[a] - self.origin[a]) / self.h[a]))
            out.append(min(max(idx, 0), self.dims[a] - 1))
        return tuple(out)

    def face_area(self, axis: int) -> float:
        b, c = [a for a in range(3) if a != axis]
        return self.h[b] * self.h[c]


def cfl_timestep(spec: GridSpec, safety: float = 0.99) -> float:
    """Largest stable leapfrog step scaled by `safety`."""
    if not 0 < safety <= 1:
        raise InvalidParameterError(f"CFL safety factor must be in (0, 1], got {safety}")
    return safety / (C0 * math.sqrt(sum(1.0 / h**2 for h in spec.h)))


@dataclass
class WallFaces:
    """
    Lossy conductor faces seen from the field region.

    Row n is the face on side `side[n]` (-1 low, +1 high) along `axis[n]` of non-metal cell `cells[n]`.
    """

    cells: np.ndarray
    axis: np.ndarray
    side: np.ndarray
    sigma: np.ndarray
    area: np.ndarray
    group: np.ndarray

    def __len__(self) -> int:
        return len(self.sigma)

    def groups(self) -> List[str]:
        seen: Dict[str, None] = {}
        for g in self.group.tolist():
            seen.setdefault(g, None)
        return list(seen)

    def select(self, mask: np.ndarray) -> "WallFaces":
        return WallFaces(
            cells=self.cells[mask],
            axis=self.axis[mask],
            side=self.side[mask],
            sigma=self.sigma[mask],
            area=self.area[mask],
            group=self.group[mask],
        )


@dataclass(frozen=True)
class PortEdges:
    """Grid edges of a lumped port, all parallel to `axis`, in series."""

    name: str
    axis: int
    indices: np.ndarray
    impedance: float


@dataclass
class MaterialGrid:
    spec: GridSpec
    materials: Tuple[Material, ...]
    cell_material: np.ndarray
    cell_shape: np.ndarray
    shape_labels: Tuple[str, ...]
    pec_faces: Tuple[np.ndarray, np.ndarray, np.ndarray]
    wall_faces: WallFaces
    ports: Tuple[PortEdges, ...] = ()
    probes: Tuple[ProbeSpec, ...] = ()

    def _per_cell(self, attr: str) -> np.ndarray:
        table = np.array([getattr(m, attr) for m in self.materials], dtype=float)
        return table[self.cell_material]

    @property
    def eps_r(self) -> np.ndarray:
        return self._per_cell("eps_r")

    @property
    def mu_r(self) -> np.ndarray:
        return self._per_cell("mu_r")

    @property
    def metal(self) -> np.ndarray:
        table = np.array([m.is_conductor for m in self.materials], dtype=bool)
        return table[self.cell_material]

    def material_names(self) -> List[str]:
        return [m.name for m in self.materials]

    def material_slice(self, axis: int, index: int) -> np.ndarray:
        """Material indices on the cell layer `index` normal to `axis`."""
        if not 0 <= index < self.spec.dims[axis]:
            raise InvalidParameterError(f"slice index {index} outside 0..{self.spec.dims[axis] - 1}")
        return np.take(self.cell_material, index, axis=axis)

    def shape_cell_volume(self, shape_index: int) -> float:
        return float(np.count_nonzero(self.cell_shape == shape_index)) * self.spec.cell_volume


def _axis_mask(spec: GridSpec, axis: int, lo: float, hi: float) -> np.ndarray:
    c = spec.centers(axis)
    return (c >= lo) & (c < hi)


def _paint_volume(spec: GridSpec, box: Box, cell_material, cell_shape, mat_idx: int, shape_idx: int) -> None:
    for a in range(3):
        if box.extent[a] < spec.h[a] * (1 - 1e-9):
            raise UnderResolutionError(
                f"shape {box.label!r} is {box.extent[a]:.3e} m thick along {AXES[a]}, "
                f"below one cell ({spec.h[a]:.3e} m)"
            )
    mx, my, mz = (_axis_mask(spec, a, box.min_corner[a], box.max_corner[a]) for a in range(3))
    region = np.ix_(np.flatnonzero(mx), np.flatnonzero(my), np.flatnonzero(mz))
    cell_material[region] = mat_idx
    cell_shape[region] = shape_idx


def _paint_sheet(spec: GridSpec, box: Box, pec_faces, conducting: bool) -> None:
    a = box.sheet_axis
    idx: List[slice] = [slice(None)] * 3
    idx[a] = spec.node_index(a, 0.5 * (box.min_corner[a] + box.max_corner[a]))
    for b in range(3):
        if b == a:
            continue
        i_lo = spec.node_index(b, box.min_corner[b])
        i_hi = spec.node_index(b, box.max_corner[b])
        if i_hi <= i_lo:
            i_hi = min(i_lo + 1, spec.dims[b])
            i_lo = i_hi - 1
        idx[b] = slice(i_lo, i_hi)
    pec_faces[a][tuple(idx)] = conducting


def _group_label(label: str) -> str:
    return re.sub(r"_\d+$", "", label) or "metal"


def _wall_faces(spec: GridSpec, materials, cell_material, cell_shape, labels, wall: Material) -> WallFaces:
    conductor = np.array([m.is_conductor for m in materials], dtype=bool)
    metal = conductor[cell_material]
    rows = {"cells": [], "axis": [], "side": [], "sigma": [], "area": [], "group": []}
    for a in range(3):
        pad = [(0, 0)] * 3
        pad[a] = (1, 1)
        padded = np.pad(metal, pad, constant_values=True)
        for side in (-1, 1):
            sl: List[slice] = [slice(None)] * 3
            sl[a] = slice(0, -2) if side < 0 else slice(2, None)
            faces = ~metal & padded[tuple(sl)]
            cells = np.argwhere(faces)
            if cells.size == 0:
                continue
            nb = cells.copy()
            nb[:, a] += side
            outside = (nb[:, a] < 0) | (nb[:, a] >= spec.dims[a])
            sigma = np.full(len(cells), wall.sigma)
            group = np.full(len(cells), "enclosure", dtype=object)
            keep = np.full(len(cells), not wall.is_pec)
            inside = np.flatnonzero(~outside)
            for n in inside:
                ci = tuple(nb[n])
                mat = materials[cell_material[ci]]
                sigma[n] = mat.sigma
                keep[n] = not mat.is_pec
                shape = cell_shape[ci]
                group[n] = _group_label(labels[shape]) if shape >= 0 else "metal"
            rows["cells"].append(cells[keep])
            rows["axis"].append(np.full(int(keep.sum()), a, dtype=np.int8))
            rows["side"].append(np.full(int(keep.sum()), side, dtype=np.int8))
            rows["sigma"].append(sigma[keep])
            rows["area"].append(np.full(int(keep.sum()), spec.face_area(a)))
            rows["group"].append(group[keep])
    if not rows["cells"]:
        return WallFaces(
            cells=np.zeros((0, 3), dtype=int),
            axis=np.zeros(0, dtype=np.int8),
            side=np.zeros(0, dtype=np.int8),
            sigma=np.zeros(0),
            area=np.zeros(0),
            group=np.zeros(0, dtype=object),
        )
    return WallFaces(**{k: np.concatenate(v) for k, v in rows.items()})


def _port_edges(spec: GridSpec, port) -> PortEdges:
    a = port.axis
    lo, hi = sorted((port.start[a], port.end[a]))
    i0, i1 = spec.node_index(a, lo), spec.node_index(a, hi)
    if i1 <= i0:
        raise PlacementError(f"port {port.name!r} is shorter than one cell along {AXES[a]}")
    fixed = [spec.node_index(b, port.start[b]) for b in range(3)]
    indices = np.array([[i if b == a else fixed[b] for b in range(3)] for i in range(i0, i1)], dtype=int)
    return PortEdges(name=port.name, axis=a, indices=indices, impedance=port.impedance)


def voxelize(scene: Scene, spec: GridSpec) -> MaterialGrid:
    """Sample the scene's shapes onto the grid in priority order."""
    for a in range(3):
        if abs(scene.domain.extent[a] - spec.extent[a]) > spec.h[a]:
            raise InvalidParameterError(f"grid extent along {AXES[a]} does not match the scene domain")

    materials: List[Material] = [scene.material(scene.domain.material)]
    index: Dict[str, int] = {materials[0].name: 0}

    def material_index(name: str) -> int:
        if name not in index:
            index[name] = len(materials)
            materials.append(scene.material(name))
        return index[name]

    nx, ny, nz = spec.dims
    cell_material = np.zeros(spec.dims, dtype=np.int16)
    cell_shape = np.full(spec.dims, -1, dtype=np.int32)
    pec_faces = (
        np.zeros((nx + 1, ny, nz), dtype=bool),
        np.zeros((nx, ny + 1, nz), dtype=bool),
        np.zeros((nx, ny, nz + 1), dtype=bool),
    )
    order = sorted(range(len(scene.shapes)), key=lambda i: scene.shapes[i].priority)
    for i in order:
        shape = scene.shapes[i]
        mat = scene.material(shape.material)
        if shape.sheet:
            if not (mat.is_pec or mat.is_void):
                raise InvalidParameterError(f"sheet {shape.label!r} must be a perfect conductor or vacuum")
            _paint_sheet(spec, shape, pec_faces, mat.is_pec)
        else:
            _paint_volume(spec, shape, cell_material, cell_shape, material_index(shape.material), i)

    wall = scene.material(scene.wall_material)
    labels = tuple(s.label for s in scene.shapes)
    walls = _wall_faces(spec, materials, cell_material, cell_shape, labels, wall)
    ports = tuple(_port_edges(spec, p) for p in scene.ports)
    logging.debug("Voxelized %d shapes onto %s cells, %d wall faces", len(scene.shapes), spec.dims, len(walls))
    return MaterialGrid(
        spec=spec,
        materials=tuple(materials),
        cell_material=cell_material,
        cell_shape=cell_shape,
        shape_labels=labels,
        pec_faces=pec_faces,
        wall_faces=walls,
        ports=ports,
        probes=scene.probes,
    )


def empty_cavity(extent: Vec3, cell: Vec3, wall: Optional[Material] = None) -> MaterialGrid:
    """Voxelized empty box, handy for checks against closed-form cavity results."""
    wall = wall or GOLD_PLATED_COPPER
    scene = Scene(
        domain=Box((0.0, 0.0, 0.0), extent, VACUUM.name, 0, "cavity"),
        materials=(VACUUM, wall),
        wall_material=wall.name,
    )
    return voxelize(scene, GridSpec.for_domain(scene.domain, cell))
