"""
Closed-form rectangular-cavity results used to check the solver.

Mode kinds are referred to the z axis: TE_mnp needs p >= 1 with m, n not both zero; TM_mnp needs
m, n >= 1. Together these are the index triples with at most one zero.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from qpack.core.constants import C0, ETA0
from qpack.core.errors import InvalidParameterError
from qpack.core.loss import surface_resistance
from qpack.core.scene import Box


@dataclass(frozen=True)
class RectCavity:
    a: float
    b: float
    d: float
    eps_r: float = 1.0
    sigma: float = math.inf

    def __post_init__(self):
        if min(self.a, self.b, self.d) <= 0:
            raise InvalidParameterError("cavity dimensions must be positive")
        if self.eps_r < 1:
            raise InvalidParameterError(f"fill eps_r must be >= 1, got {self.eps_r}")
        if not self.sigma > 0:
            raise InvalidParameterError("wall conductivity must be positive")

    def frequency(self, m: int, n: int, p: int) -> float:
        return C0 / (2.0 * math.sqrt(self.eps_r)) * math.sqrt((m / self.a) ** 2 + (n / self.b) ** 2 + (p / self.d) ** 2)

    @property
    def volume(self) -> float:
        return self.a * self.b * self.d


@dataclass(frozen=True)
class CavityMode:
    m: int
    n: int
    p: int
    f: float
    kinds: Tuple[str, ...]

    @property
    def indices(self) -> Tuple[int, int, int]:
        return self.m, self.n, self.p


def mode_kinds(m: int, n: int, p: int) -> Tuple[str, ...]:
    """Which of TE_mnp / TM_mnp exist for an index triple."""
    if min(m, n, p) < 0:
        raise InvalidParameterError("mode indices must be >= 0")
    kinds = []
    if p >= 1 and (m, n) != (0, 0):
        kinds.append("TE")
    if m >= 1 and n >= 1:
        kinds.append("TM")
    return tuple(kinds)


def rect_modes(cav: RectCavity, f_max: float) -> List[CavityMode]:
    """All resonances up to f_max, sorted by frequency then (m, n, p)."""
    if not f_max > 0:
        raise InvalidParameterError(f"f_max must be positive, got {f_max}")
    scale = 2.0 * f_max * math.sqrt(cav.eps_r) / C0
    m_max, n_max, p_max = (int(math.floor(scale * L)) for L in (cav.a, cav.b, cav.d))
    modes = []
    for m in range(m_max + 1):
        for n in range(n_max + 1):
            for p in range(p_max + 1):
                kinds = mode_kinds(m, n, p)
                if not kinds:
                    continue
                f = cav.frequency(m, n, p)
                if f <= f_max:
                    modes.append(CavityMode(m, n, p, f, kinds))
    modes.sort(key=lambda mode: (mode.f, mode.indices))
    return modes


def rect_te101_q(cav: RectCavity, f: Optional[float] = None) -> float:
    """
    Conductor Q of the TE101 mode.

    k and eta are those of the fill, which reduces to the vacuum values for eps_r = 1.
    """
    f_101 = cav.frequency(1, 0, 1)
    if f is None:
        f = f_101
    elif not math.isclose(f, f_101, rel_tol=1e-6):
        raise InvalidParameterError(f"TE101 of this cavity is at {f_101:.6g} Hz, not {f:.6g} Hz")
    rs = surface_resistance(cav.sigma, f)
    if rs == 0:
        return math.inf
    k = 2.0 * math.pi * f * math.sqrt(cav.eps_r) / C0
    eta = ETA0 / math.sqrt(cav.eps_r)
    a, b, d = cav.a, cav.b, cav.d
    return (k * a * d) ** 3 * b * eta / (2.0 * math.pi**2 * rs * (2 * a**3 * b + 2 * b * d**3 + a**3 * d + a * d**3))


def _sin2_integral(k: float, x0: float, x1: float) -> float:
    """Integral of sin^2(k x) over [x0, x1]."""
    if k == 0:
        return 0.0
    return 0.5 * (x1 - x0) - (math.sin(2 * k * x1) - math.sin(2 * k * x0)) / (4.0 * k)


def te_m0p_field(cav: RectCavity, m: int, p: int, x, z):
    """Unnormalised E_y of TE_m0p, the only electric component of that family."""
    return np.sin(m * math.pi * np.asarray(x) / cav.a) * np.sin(p * math.pi * np.asarray(z) / cav.d)


def dielectric_shift(cav: RectCavity, mode: Tuple[int, int, int], slab: Box, slab_eps_r: float) -> float:
    """
    First-order fractional frequency shift from a dielectric slab, on the unperturbed TE_m0p field.

    The slab is given in cavity coordinates with the origin at a corner.
    """
    m, n, p = mode
    if n != 0 or m < 1 or p < 1:
        raise InvalidParameterError(f"dielectric_shift supports TE_m0p modes only, got {mode}")
    if slab_eps_r < 1:
        raise InvalidParameterError("slab eps_r must be >= 1")
    enclosure = Box((0.0, 0.0, 0.0), (cav.a, cav.b, cav.d), "vacuum")
    if not enclosure.contains_box(slab):
        raise InvalidParameterError("slab lies outside the cavity")
    (x0, y0, z0), (x1, y1, z1) = slab.min_corner, slab.max_corner
    kx, kz = m * math.pi / cav.a, p * math.pi / cav.d
    inside = _sin2_integral(kx, x0, x1) * (y1 - y0) * _sin2_integral(kz, z0, z1)
    total = (cav.a / 2.0) * cav.b * (cav.d / 2.0)
    return -0.5 * (slab_eps_r - 1.0) * inside / total
