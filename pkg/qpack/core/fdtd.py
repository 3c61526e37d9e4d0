"""
Yee-lattice FDTD time stepping with soft sources, lumped ports and running DFT accumulators.

Field arrays for a grid of (Nx, Ny, Nz) cells:

    ex (Nx, Ny+1, Nz+1)   ey (Nx+1, Ny, Nz+1)   ez (Nx+1, Ny+1, Nz)
    hx (Nx+1, Ny, Nz)     hy (Nx, Ny+1, Nz)     hz (Nx, Ny, Nz+1)

After n steps the electric field holds t = n*dt and the magnetic field t = (n - 1/2)*dt.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from qpack.core.constants import C0, EPS0, MU0
from qpack.core.errors import AnalysisError, InstabilityError, InvalidParameterError, PlacementError
from qpack.core.grid import GridSpec, MaterialGrid, PortEdges, cfl_timestep
from qpack.core.scene import ProbeSpec, Vec3

E_NAMES = ("ex", "ey", "ez")
H_NAMES = ("hx", "hy", "hz")
BOUNDARY_KINDS = ("pec", "pmc")
PLANES = {"xy": 2, "yz": 0, "zx": 1}

# Half-width of the -20 dB band in units of the Gaussian spectral standard deviation.
_MINUS_20DB = math.sqrt(2.0 * math.log(10.0))


@dataclass(frozen=True)
class SourceSpec:
    """
    Modulated-Gaussian excitation.

    `bandwidth` is the full width of the -20 dB band around `center_frequency`. A dipole drives
    the `axis` component at `position`, or every edge of that component inside `extent`. A port
    source drives the named lumped port with a Thevenin voltage of peak `amplitude`.
    """

    kind: str = "dipole"
    position: Optional[Vec3] = None
    extent: Optional[Tuple[Vec3, Vec3]] = None
    axis: int = 2
    port: Optional[str] = None
    center_frequency: float = 12e9
    bandwidth: float = 20e9
    amplitude: float = 1.0
    delay: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("dipole", "port"):
            raise InvalidParameterError(f"unknown source kind {self.kind!r}")
        if self.center_frequency <= 0 or self.bandwidth <= 0:
            raise InvalidParameterError("source center_frequency and bandwidth must be positive")
        if self.kind == "dipole" and self.position is None and self.extent is None:
            raise InvalidParameterError("dipole source needs a position or an extent")
        if self.kind == "port" and not self.port:
            raise InvalidParameterError("port source needs a port name")
        if self.axis not in (0, 1, 2):
            raise InvalidParameterError(f"source axis must be 0, 1 or 2, got {self.axis}")

    @property
    def sigma_f(self) -> float:
        return self.bandwidth / (2.0 * _MINUS_20DB)

    @property
    def tau(self) -> float:
        return 1.0 / (2.0 * math.pi * self.sigma_f)

    @property
    def t0(self) -> float:
        return self.delay if self.delay is not None else 6.0 * self.tau

    @property
    def end_time(self) -> float:
        """Time after which the excitation is negligible."""
        return self.t0 + 6.0 * self.tau

    def waveform(self, t):
        u = (np.asarray(t, dtype=float) - self.t0) / self.tau
        return self.amplitude * np.exp(-0.5 * u**2) * np.sin(2.0 * math.pi * self.center_frequency * u * self.tau)

    def relative_spectrum(self, f: float) -> float:
        """|G(f)| / |G(f_c)|."""

        def lobe(x):
            return math.exp(-0.5 * (x / self.sigma_f) ** 2)

        fc = self.center_frequency
        peak = abs(lobe(0.0) - lobe(2 * fc))
        return abs(lobe(f - fc) - lobe(f + fc)) / peak


@dataclass
class _Drive:
    component: int
    index: Tuple[np.ndarray, ...]
    source: SourceSpec


@dataclass
class _Port:
    edges: PortEdges
    index: Tuple[np.ndarray, ...]
    length: float
    ca: np.ndarray
    cdiv: np.ndarray
    cs: np.ndarray
    loop: Tuple[int, int, int]
    source: Optional[SourceSpec] = None


@dataclass
class SolverState:
    grid: MaterialGrid
    dt: float
    boundaries: Tuple[str, str, str]
    ex: np.ndarray
    ey: np.ndarray
    ez: np.ndarray
    hx: np.ndarray
    hy: np.ndarray
    hz: np.ndarray
    ce: Tuple[np.ndarray, np.ndarray, np.ndarray]
    ch: Tuple[np.ndarray, np.ndarray, np.ndarray]
    eps_edges: Tuple[np.ndarray, np.ndarray, np.ndarray]
    mu_faces: Tuple[np.ndarray, np.ndarray, np.ndarray]
    drives: List[_Drive] = field(default_factory=list)
    ports: List[_Port] = field(default_factory=list)
    probes: List[Tuple[str, Tuple[int, int, int]]] = field(default_factory=list)
    dft: Dict[float, Dict[str, np.ndarray]] = field(default_factory=dict)
    dft_start: int = 0
    dft_window: Optional[int] = None
    dft_weight: float = 0.0
    n: int = 0

    @property
    def spec(self) -> GridSpec:
        return self.grid.spec

    @property
    def time(self) -> float:
        return self.n * self.dt

    def e(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.ex, self.ey, self.ez

    def h(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.hx, self.hy, self.hz


@dataclass
class ProbeRecords:
    """
    Time series recorded by `run`. Sample n is taken after step n + 1.

    `wall_h` maps each accumulated DFT frequency to the tangential |H| phasor amplitude on every
    lossy wall face, in the order of `MaterialGrid.wall_faces`.
    """

    dt: float
    t: np.ndarray
    probes: Dict[str, np.ndarray]
    port_v: Dict[str, np.ndarray]
    port_i: Dict[str, np.ndarray]
    port_vs: Dict[str, np.ndarray]
    wall_h: Dict[float, np.ndarray] = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.t)

    def port_incident(self, name: str) -> np.ndarray:
        """Incident voltage wave of a matched port: half the Thevenin voltage."""
        return 0.5 * self.port_vs[name]


def _others(axis: int) -> Tuple[int, int]:
    return (axis + 1) % 3, (axis + 2) % 3


def _edge_shape(dims, axis: int) -> Tuple[int, int, int]:
    return tuple(n if a == axis else n + 1 for a, n in enumerate(dims))


def _face_shape(dims, axis: int) -> Tuple[int, int, int]:
    return tuple(n + 1 if a == axis else n for a, n in enumerate(dims))


def _edge_reduce(cells: np.ndarray, axis: int, mode: str) -> np.ndarray:
    """Combine the four cells around each edge parallel to `axis`: mean of eps or any of a mask."""
    b, c = _others(axis)
    pad = [(0, 0)] * 3
    pad[b] = pad[c] = (1, 1)
    if mode == "mean":
        p = np.pad(cells, pad, mode="edge")
    else:
        p = np.pad(cells, pad, mode="constant", constant_values=False)
    parts = []
    for sb in (slice(None, -1), slice(1, None)):
        for sc in (slice(None, -1), slice(1, None)):
            sl = [slice(None)] * 3
            sl[b], sl[c] = sb, sc
            parts.append(p[tuple(sl)])
    if mode == "mean":
        return 0.25 * (parts[0] + parts[1] + parts[2] + parts[3])
    return parts[0] | parts[1] | parts[2] | parts[3]


def _face_mean(cells: np.ndarray, axis: int) -> np.ndarray:
    pad = [(0, 0)] * 3
    pad[axis] = (1, 1)
    p = np.pad(cells, pad, mode="edge")
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis], hi[axis] = slice(None, -1), slice(1, None)
    return 0.5 * (p[tuple(lo)] + p[tuple(hi)])


def _sheet_edges(pec_faces, dims, axis: int) -> np.ndarray:
    """Edges parallel to `axis` lying on a perfect-conductor sheet face."""
    out = np.zeros(_edge_shape(dims, axis), dtype=bool)
    for b in _others(axis):
        c = 3 - axis - b
        pad = [(0, 0)] * 3
        pad[c] = (1, 1)
        p = np.pad(pec_faces[b], pad, constant_values=False)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[c], hi[c] = slice(None, -1), slice(1, None)
        out |= p[tuple(lo)] | p[tuple(hi)]
    return out


def _edge_mask(grid: MaterialGrid, boundaries, axis: int) -> np.ndarray:
    """1.0 on edges the solver updates; 0.0 on conductor surfaces, interiors and sheets."""
    dims = grid.spec.dims
    blocked = _edge_reduce(grid.metal, axis, "any") | _sheet_edges(grid.pec_faces, dims, axis)
    for b in _others(axis):
        if boundaries[b] == "pec":
            sl = [slice(None)] * 3
            sl[b] = 0
            blocked[tuple(sl)] = True
            sl[b] = dims[b]
            blocked[tuple(sl)] = True
    return (~blocked).astype(float)


def _trapezoid(n: int, nodal: bool) -> np.ndarray:
    if not nodal:
        return np.ones(n)
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    return w


def _weights(spec: GridSpec, axis: int, electric: bool) -> np.ndarray:
    """Quadrature volume of each field sample; boundary planes carry half weight."""
    parts = []
    for a in range(3):
        nodal = (a != axis) if electric else (a == axis)
        parts.append(_trapezoid(spec.dims[a], nodal))
    return spec.cell_volume * parts[0][:, None, None] * parts[1][None, :, None] * parts[2][None, None, :]


def _edge_positions(spec: GridSpec, axis: int) -> List[np.ndarray]:
    return [spec.centers(a) if a == axis else spec.nodes(a) for a in range(3)]


def _resolve_dipole(spec: GridSpec, masks, source: SourceSpec) -> _Drive:
    a = source.axis
    mask = masks[a]
    if source.extent is not None:
        lo, hi = source.extent
        tol = 1e-9 * min(spec.h)
        pos = _edge_positions(spec, a)
        sel = [np.flatnonzero((p >= lo[b] - tol) & (p <= hi[b] + tol)) for b, p in enumerate(pos)]
        grid_idx = np.ix_(*sel)
        free = mask[grid_idx] > 0
        if not free.any():
            raise PlacementError(f"source extent {source.extent} covers no free {'xyz'[a]}-edge")
        ii, jj, kk = np.nonzero(free)
        index = (sel[0][ii], sel[1][jj], sel[2][kk])
        if not free.all():
            logging.warning("Dropping %d blocked edges from extended source", int((~free).sum()))
        return _Drive(component=a, index=index, source=source)

    p = source.position
    idx = []
    for b in range(3):
        if b == a:
            idx.append(min(max(int(math.floor((p[b] - spec.origin[b]) / spec.h[b])), 0), spec.dims[b] - 1))
        else:
            idx.append(spec.node_index(b, p[b]))
    if mask[tuple(idx)] == 0:
        raise PlacementError(f"dipole at {p} drives an edge inside a conductor or on a wall")
    return _Drive(component=a, index=tuple(np.array([i]) for i in idx), source=source)


def _resolve_port(state_eps, masks, spec: GridSpec, dt: float, edges: PortEdges) -> _Port:
    a = edges.axis
    index = tuple(edges.indices[:, b] for b in range(3))
    if np.any(masks[a][index] == 0):
        raise PlacementError(f"port {edges.name!r} touches a conductor edge")
    n_edges = len(edges.indices)
    r_edge = edges.impedance / n_edges
    b, c = _others(a)
    area = spec.h[b] * spec.h[c]
    length = spec.h[a]
    eps = EPS0 * state_eps[a][index]
    beta = dt * length / (2.0 * eps * r_edge * area)
    return _Port(
        edges=edges,
        index=index,
        length=length,
        ca=(1.0 - beta) / (1.0 + beta),
        cdiv=1.0 / (1.0 + beta),
        cs=dt / (eps * r_edge * area * (1.0 + beta)) / n_edges,
        loop=tuple(int(v) for v in edges.indices[n_edges // 2]),
    )


def initialize(
    grid: MaterialGrid,
    spec: GridSpec,
    sources: Sequence[SourceSpec],
    probes: Optional[Sequence[ProbeSpec]] = None,
    *,
    dt: Optional[float] = None,
    boundaries: Tuple[str, str, str] = ("pec", "pec", "pec"),
    dft_frequencies: Sequence[float] = (),
    dft_start: int = 0,
    dft_window: Optional[int] = None,
) -> SolverState:
    """Zero fields, update coefficients, resolved sources, ports and probes."""
    if spec != grid.spec:
        raise InvalidParameterError("grid spec does not match the voxelized material grid")
    boundaries = tuple(boundaries)
    if len(boundaries) != 3 or any(b not in BOUNDARY_KINDS for b in boundaries):
        raise InvalidParameterError(f"boundaries must be three of {BOUNDARY_KINDS}, got {boundaries}")
    limit = cfl_timestep(spec, 1.0)
    dt = cfl_timestep(spec) if dt is None else float(dt)
    if not 0 < dt <= limit:
        raise InvalidParameterError(f"time step {dt:.4e} s exceeds the stability limit {limit:.4e} s")

    dims = spec.dims
    eps_cells, mu_cells = grid.eps_r, grid.mu_r
    eps_edges = tuple(_edge_reduce(eps_cells, a, "mean") for a in range(3))
    mu_faces = tuple(_face_mean(mu_cells, a) for a in range(3))
    masks = tuple(_edge_mask(grid, boundaries, a) for a in range(3))
    ce = tuple(dt / (EPS0 * eps_edges[a]) * masks[a] for a in range(3))
    ch = tuple(dt / (MU0 * mu_faces[a]) for a in range(3))

    state = SolverState(
        grid=grid,
        dt=dt,
        boundaries=boundaries,
        ex=np.zeros(_edge_shape(dims, 0)),
        ey=np.zeros(_edge_shape(dims, 1)),
        ez=np.zeros(_edge_shape(dims, 2)),
        hx=np.zeros(_face_shape(dims, 0)),
        hy=np.zeros(_face_shape(dims, 1)),
        hz=np.zeros(_face_shape(dims, 2)),
        ce=ce,
        ch=ch,
        eps_edges=eps_edges,
        mu_faces=mu_faces,
    )
    state.ports = [_resolve_port(eps_edges, masks, spec, dt, edges) for edges in grid.ports]
    by_name = {p.edges.name: p for p in state.ports}
    f_limit = C0 / (20.0 * max(spec.h))
    for source in sources:
        if source.kind == "port":
            if source.port not in by_name:
                raise PlacementError(f"source names unknown port {source.port!r}")
            by_name[source.port].source = source
        else:
            state.drives.append(_resolve_dipole(spec, masks, source))
        if source.relative_spectrum(f_limit) > 1e-3:
            logging.warning(
                "Source spectrum is above -60 dB at %.3g Hz, where the grid drops below 20 cells per wavelength",
                f_limit,
            )
    for probe in grid.probes if probes is None else probes:
        state.probes.append((probe.name, spec.cell_index(probe.position)))
    _reset_dft(state, dft_frequencies, int(dft_start), dft_window)
    logging.debug("Initialized solver on %s cells, dt=%.4e s, %d ports", dims, dt, len(state.ports))
    return state


def _reset_dft(state: SolverState, frequencies: Sequence[float], start: int, window: Optional[int]) -> None:
    if window is not None and window < 1:
        raise InvalidParameterError(f"DFT window must span at least one step, got {window}")
    state.dft = {}
    for f in frequencies:
        f = float(f)
        if f <= 0:
            raise InvalidParameterError(f"DFT frequency must be positive, got {f}")
        fields = zip(E_NAMES + H_NAMES, state.e() + state.h())
        state.dft[f] = {name: np.zeros(arr.shape, dtype=complex) for name, arr in fields}
    state.dft_start = start
    state.dft_window = window
    state.dft_weight = 0.0


def enable_dft(state: SolverState, frequencies: Sequence[float], window: Optional[int] = None) -> None:
    """
    Start fresh phasor accumulators with the next step.

    With `window` the samples are Hann-weighted over that many steps and accumulation stops
    afterwards; otherwise every later step counts equally.
    """
    _reset_dft(state, frequencies, state.n + 1, window)


def _dft_sample_weight(state: SolverState) -> float:
    k = state.n - state.dft_start
    if k < 0:
        return 0.0
    if state.dft_window is None:
        return 1.0
    if k >= state.dft_window:
        return 0.0
    return math.sin(math.pi * (k + 0.5) / state.dft_window) ** 2


def _node_diff(arr: np.ndarray, axis: int, h: float, pmc: bool) -> np.ndarray:
    """Derivative from face samples onto node planes; PMC planes use an odd mirror ghost."""
    shape = list(arr.shape)
    shape[axis] += 1
    out = np.zeros(shape)
    inner = [slice(None)] * 3
    inner[axis] = slice(1, -1)
    out[tuple(inner)] = np.diff(arr, axis=axis) / h
    if pmc:
        first = [slice(None)] * 3
        last = [slice(None)] * 3
        first[axis], last[axis] = 0, -1
        out[tuple(first)] = 2.0 * arr[tuple(first)] / h
        out[tuple(last)] = -2.0 * arr[tuple(last)] / h
    return out


def _curl_e(state: SolverState) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    hx, hy, hz = state.spec.h
    ex, ey, ez = state.e()
    return (
        np.diff(ez, axis=1) / hy - np.diff(ey, axis=2) / hz,
        np.diff(ex, axis=2) / hz - np.diff(ez, axis=0) / hx,
        np.diff(ey, axis=0) / hx - np.diff(ex, axis=1) / hy,
    )


def _curl_h(state: SolverState) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    hx, hy, hz = state.spec.h
    px, py, pz = (b == "pmc" for b in state.boundaries)
    return (
        _node_diff(state.hz, 1, hy, py) - _node_diff(state.hy, 2, hz, pz),
        _node_diff(state.hx, 2, hz, pz) - _node_diff(state.hz, 0, hx, px),
        _node_diff(state.hy, 0, hx, px) - _node_diff(state.hx, 1, hy, py),
    )


def _h_value(arr: np.ndarray, idx) -> float:
    if any(i < 0 or i >= n for i, n in zip(idx, arr.shape)):
        return 0.0
    return float(arr[tuple(idx)])


def port_current(state: SolverState, port: _Port) -> float:
    """Ampere loop of H around the port's middle edge."""
    a = port.edges.axis
    b, c = _others(a)
    h_fields = state.h()
    idx = list(port.loop)
    less_b = list(idx)
    less_b[b] -= 1
    less_c = list(idx)
    less_c[c] -= 1
    hb, hc = h_fields[b], h_fields[c]
    step = state.spec.h
    return (_h_value(hc, idx) - _h_value(hc, less_b)) * step[c] - (_h_value(hb, idx) - _h_value(hb, less_c)) * step[b]


def port_voltage(state: SolverState, port: _Port) -> float:
    return float(state.e()[port.edges.axis][port.index].sum() * port.length)


def step(state: SolverState) -> None:
    """Advance H by a half step and E by a full step."""
    curl_e = _curl_e(state)
    for h_arr, ch, curl in zip(state.h(), state.ch, curl_e):
        h_arr -= ch * curl

    t_half = (state.n + 0.5) * state.dt
    saved = [state.e()[p.edges.axis][p.index].copy() for p in state.ports]
    curl_h = _curl_h(state)
    for e_arr, ce, curl in zip(state.e(), state.ce, curl_h):
        e_arr += ce * curl
    for port, e_old in zip(state.ports, saved):
        e_arr = state.e()[port.edges.axis]
        increment = e_arr[port.index] - e_old
        value = port.ca * e_old + port.cdiv * increment
        if port.source is not None:
            value = value + port.cs * float(port.source.waveform(t_half))
        e_arr[port.index] = value
    for drive in state.drives:
        state.e()[drive.component][drive.index] += float(drive.source.waveform(t_half))
    state.n += 1

    if not (np.isfinite(state.ex.sum()) and np.isfinite(state.ey.sum()) and np.isfinite(state.ez.sum())):
        raise InstabilityError(state.n)

    weight = _dft_sample_weight(state) if state.dft else 0.0
    if weight > 0:
        t_e = state.n * state.dt
        t_h = t_e - 0.5 * state.dt
        for f, acc in state.dft.items():
            w = 2.0 * math.pi * f
            pe = complex(np.exp(-1j * w * t_e)) * state.dt * weight
            ph = complex(np.exp(-1j * w * t_h)) * state.dt * weight
            for name, arr in zip(E_NAMES, state.e()):
                acc[name] += arr * pe
            for name, arr in zip(H_NAMES, state.h()):
                acc[name] += arr * ph
        state.dft_weight += weight * state.dt


def total_energy(state: SolverState) -> float:
    """
    Discrete electromagnetic energy, exactly conserved by lossless source-free stepping.

    Uses the product of H at the two half steps around the current E.
    """
    spec = state.spec
    w_e = 0.0
    for a, arr in enumerate(state.e()):
        w_e += float(np.sum(EPS0 * state.eps_edges[a] * arr**2 * _weights(spec, a, True)))
    w_h = 0.0
    for a, (arr, ch, curl) in enumerate(zip(state.h(), state.ch, _curl_e(state))):
        ahead = arr - ch * curl
        w_h += float(np.sum(MU0 * state.mu_faces[a] * arr * ahead * _weights(spec, a, False)))
    return 0.5 * (w_e + w_h)


def _cell_center_e(ex, ey, ez):
    cx = 0.25 * (ex[:, :-1, :-1] + ex[:, 1:, :-1] + ex[:, :-1, 1:] + ex[:, 1:, 1:])
    cy = 0.25 * (ey[:-1, :, :-1] + ey[1:, :, :-1] + ey[:-1, :, 1:] + ey[1:, :, 1:])
    cz = 0.25 * (ez[:-1, :-1, :] + ez[1:, :-1, :] + ez[:-1, 1:, :] + ez[1:, 1:, :])
    return cx, cy, cz


def _cell_center_h(hx, hy, hz):
    return 0.5 * (hx[:-1] + hx[1:]), 0.5 * (hy[:, :-1] + hy[:, 1:]), 0.5 * (hz[:, :, :-1] + hz[:, :, 1:])


def _probe_e(state: SolverState, cell) -> np.ndarray:
    i, j, k = cell
    return np.array(
        [
            state.ex[i, j : j + 2, k : k + 2].mean(),
            state.ey[i : i + 2, j, k : k + 2].mean(),
            state.ez[i : i + 2, j : j + 2, k].mean(),
        ]
    )


def run(state: SolverState, n_steps: int, progress_every: int = 0) -> ProbeRecords:
    """Step n_steps times, sampling probes and ports after every step."""
    if n_steps < 0:
        raise InvalidParameterError(f"n_steps must be >= 0, got {n_steps}")
    records = ProbeRecords(
        dt=state.dt,
        t=np.zeros(n_steps),
        probes={name: np.zeros((n_steps, 3)) for name, _ in state.probes},
        port_v={p.edges.name: np.zeros(n_steps) for p in state.ports},
        port_i={p.edges.name: np.zeros(n_steps) for p in state.ports},
        port_vs={p.edges.name: np.zeros(n_steps) for p in state.ports},
    )
    started = time.monotonic()
    for n in range(n_steps):
        t_half = (state.n + 0.5) * state.dt
        step(state)
        records.t[n] = state.time
        for name, cell in state.probes:
            records.probes[name][n] = _probe_e(state, cell)
        for port in state.ports:
            name = port.edges.name
            records.port_v[name][n] = port_voltage(state, port)
            records.port_i[name][n] = port_current(state, port)
            if port.source is not None:
                records.port_vs[name][n] = float(port.source.waveform(t_half))
        if progress_every and (n + 1) % progress_every == 0:
            elapsed = time.monotonic() - started
            eta = elapsed / (n + 1) * (n_steps - n - 1)
            logging.info(
                "Step %d/%d t=%.4e s energy=%.4e J (eta %.0f s)", n + 1, n_steps, state.time, total_energy(state), eta
            )
    if state.dft_weight > 0:
        records.wall_h = {f: wall_tangential_h(state, f) for f in state.dft}
    return records


def dft_fields(state: SolverState, frequency: float) -> Dict[str, np.ndarray]:
    """
    Phasor amplitudes at a requested frequency, in V/m and A/m.

    A field Re(A exp(i w t)) sampled over the accumulation window yields A.
    """
    try:
        acc = state.dft[float(frequency)]
    except KeyError as e:
        raise AnalysisError(f"no DFT accumulated at {frequency:.6g} Hz") from e
    if not state.dft_weight > 0:
        raise AnalysisError(f"DFT at {frequency:.6g} Hz has no samples yet")
    scale = 2.0 / state.dft_weight
    return {name: arr * scale for name, arr in acc.items()}


def wall_tangential_h(state: SolverState, frequency: float) -> np.ndarray:
    """Tangential |H| phasor half a cell from each lossy wall face of the grid."""
    faces = state.grid.wall_faces
    hc = cell_centered_h(state, frequency)
    i, j, k = faces.cells[:, 0], faces.cells[:, 1], faces.cells[:, 2]
    h2 = np.zeros(len(faces))
    for a in range(3):
        tangential = faces.axis != a
        h2 += np.where(tangential, np.abs(hc[a][i, j, k]) ** 2, 0.0)
    return np.sqrt(h2)


def dft_energy(state: SolverState, frequency: float) -> float:
    """Time-averaged stored energy of the accumulated phasor field."""
    acc = dft_fields(state, frequency)
    spec = state.spec
    total = 0.0
    for a in range(3):
        total += float(np.sum(EPS0 * state.eps_edges[a] * np.abs(acc[E_NAMES[a]]) ** 2 * _weights(spec, a, True)))
        total += float(np.sum(MU0 * state.mu_faces[a] * np.abs(acc[H_NAMES[a]]) ** 2 * _weights(spec, a, False)))
    return 0.25 * total


def cell_centered_h(state: SolverState, frequency: Optional[float] = None):
    if frequency is None:
        return _cell_center_h(*state.h())
    acc = dft_fields(state, frequency)
    return _cell_center_h(acc["hx"], acc["hy"], acc["hz"])


def field_slice(state: SolverState, plane: str, index: int, quantity: str = "|E|", frequency: Optional[float] = None):
    """
    2-D cut of cell-centred E on the cell layer `index`.

    Rows run along the first axis of the plane name: "xy" -> [x, y], "yz" -> [y, z], "zx" -> [z, x].
    With `frequency` the phasor amplitude (V/m) is used and components are returned as magnitudes.
    """
    if plane not in PLANES:
        raise InvalidParameterError(f"plane must be one of {sorted(PLANES)}, got {plane!r}")
    normal = PLANES[plane]
    if not 0 <= index < state.spec.dims[normal]:
        raise InvalidParameterError(f"slice index {index} outside 0..{state.spec.dims[normal] - 1}")
    if frequency is None:
        cx, cy, cz = _cell_center_e(*state.e())
    else:
        acc = dft_fields(state, frequency)
        cx, cy, cz = _cell_center_e(acc["ex"], acc["ey"], acc["ez"])
    if quantity == "|E|":
        values = np.sqrt(np.abs(cx) ** 2 + np.abs(cy) ** 2 + np.abs(cz) ** 2)
    elif quantity in ("Ex", "Ey", "Ez"):
        values = {"Ex": cx, "Ey": cy, "Ez": cz}[quantity]
        if frequency is not None:
            values = np.abs(values)
    else:
        raise InvalidParameterError(f"unknown quantity {quantity!r}")
    cut = np.take(values, index, axis=normal)
    return cut.T if plane == "zx" else cut
