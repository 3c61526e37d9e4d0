"""
Conductor loss from surface participation, and the Q <-> T1 conversions.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Union

import numpy as np

from qpack.core.constants import H_PLANCK, K_B, MU0
from qpack.core.errors import InvalidParameterError
from qpack.core.fdtd import SolverState, dft_energy, wall_tangential_h


class QFlag(Enum):
    """Distinguished Q values that are not numbers."""

    INFINITE = "infinite"


QValue = Union[float, QFlag]


def skin_depth(sigma: float, f: float, mu_r: float = 1.0) -> float:
    """Classical skin depth 1 / sqrt(pi f mu sigma)."""
    if not sigma > 0:
        raise InvalidParameterError(f"conductivity must be positive, got {sigma}")
    if not f > 0:
        raise InvalidParameterError(f"frequency must be positive, got {f}")
    return 1.0 / math.sqrt(math.pi * f * mu_r * MU0 * sigma)


def surface_resistance(sigma: float, f: float, mu_r: float = 1.0) -> float:
    """R_s = sqrt(pi f mu / sigma); zero for a perfect conductor."""
    if not sigma > 0:
        raise InvalidParameterError(f"conductivity must be positive, got {sigma}")
    if not f > 0:
        raise InvalidParameterError(f"frequency must be positive, got {f}")
    if math.isinf(sigma):
        return 0.0
    return math.sqrt(math.pi * f * mu_r * MU0 / sigma)


@dataclass
class WallFieldSet:
    """Tangential |H| phasor magnitude, area, conductivity and group label of every lossy wall face."""

    frequency: float
    h_t: np.ndarray
    area: np.ndarray
    sigma: np.ndarray
    energy: float
    group: Optional[np.ndarray] = None
    mu_r: float = 1.0

    def __post_init__(self):
        self.h_t = np.abs(np.asarray(self.h_t)).astype(float)
        self.area = np.asarray(self.area, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.group is None:
            self.group = np.full(self.h_t.shape, "walls", dtype=object)
        else:
            self.group = np.asarray(self.group, dtype=object)
        if not (self.h_t.shape == self.area.shape == self.sigma.shape == self.group.shape):
            raise InvalidParameterError("wall field arrays differ in length")
        if not self.frequency > 0:
            raise InvalidParameterError("frequency must be positive")
        if np.any(self.sigma <= 0):
            raise InvalidParameterError("every lossy wall face needs sigma > 0")
        if np.any(self.area <= 0):
            raise InvalidParameterError("wall face areas must be positive")
        if not self.energy > 0:
            raise InvalidParameterError(f"stored energy must be positive, got {self.energy}")

    def surface_resistance(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.sqrt(math.pi * self.frequency * self.mu_r * MU0 / self.sigma)

    def power_per_face(self) -> np.ndarray:
        """Time-averaged dissipation 1/2 R_s |H_t|^2 dA."""
        return 0.5 * self.surface_resistance() * self.h_t**2 * self.area

    def select(self, mask: np.ndarray) -> "WallFieldSet":
        return WallFieldSet(
            frequency=self.frequency,
            h_t=self.h_t[mask],
            area=self.area[mask],
            sigma=self.sigma[mask],
            energy=self.energy,
            group=self.group[mask],
            mu_r=self.mu_r,
        )


def q_cond(walls: WallFieldSet) -> QValue:
    """Conductor-limited Q = omega W / P_loss, or QFlag.INFINITE when nothing dissipates."""
    loss = float(np.sum(walls.power_per_face()))
    if loss <= 0:
        return QFlag.INFINITE
    return 2.0 * math.pi * walls.frequency * walls.energy / loss


def q_cond_breakdown(walls: WallFieldSet) -> Dict[str, float]:
    """1/Q contribution of each wall group; the values add up to 1/q_cond."""
    power = walls.power_per_face()
    scale = 2.0 * math.pi * walls.frequency * walls.energy
    out: Dict[str, float] = {}
    for label in dict.fromkeys(walls.group.tolist()):
        out[label] = float(np.sum(power[walls.group == label])) / scale
    return out


def q_to_t1(q: QValue, f: float) -> QValue:
    """Energy decay time T1 = Q / (2 pi f)."""
    if not f > 0:
        raise InvalidParameterError(f"frequency must be positive, got {f}")
    if q is QFlag.INFINITE:
        return QFlag.INFINITE
    if not q > 0:
        raise InvalidParameterError(f"Q must be positive, got {q}")
    return q / (2.0 * math.pi * f)


def t1_to_q(t1: float, f: float) -> float:
    if not f > 0 or not t1 > 0:
        raise InvalidParameterError("T1 and frequency must be positive")
    return 2.0 * math.pi * f * t1


def thermal_frequency(temperature: float) -> float:
    """Frequency whose photon energy equals k_B T."""
    if temperature < 0:
        raise InvalidParameterError(f"temperature must be >= 0 K, got {temperature}")
    return K_B * temperature / H_PLANCK


def wall_field_set(state: SolverState, frequency: float, h_t: Optional[np.ndarray] = None) -> WallFieldSet:
    """
    Wall faces with their tangential H phasor and the stored energy at `frequency`.

    `h_t` may come from `ProbeRecords.wall_h`; otherwise it is taken from the state's phasors.
    """
    faces = state.grid.wall_faces
    return WallFieldSet(
        frequency=frequency,
        h_t=wall_tangential_h(state, frequency) if h_t is None else h_t,
        area=faces.area,
        sigma=faces.sigma,
        energy=dft_energy(state, frequency),
        group=faces.group,
    )
