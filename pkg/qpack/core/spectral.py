"""
Spectra of recorded time series, S-parameters and resonance extraction.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, ndimage, optimize, signal

from qpack.core.errors import InvalidParameterError

# "decay" is the falling half of a Hann window: the start of the record passes unchanged and
# ring-down that outlasts the record is tapered to zero.
WINDOWS = ("rect", "hann", "decay")
# Peaks closer than this many unpadded bins to a stronger one are treated as its leakage.
GUARD_BINS = {"rect": 4, "hann": 8, "decay": 6}

CHIP_RESONANCE = "chip_resonance"
PACKAGE_MODE = "package_mode"
UNCLASSIFIED = "unclassified"


@dataclass
class Spectrum:
    """
    One-sided spectrum. values = dt * DFT(windowed, zero-padded series).

    `valid` marks bins that carry meaningful data; `record_length` is the unpadded duration.
    """

    f: np.ndarray
    values: np.ndarray
    window: str = "rect"
    record_length: Optional[float] = None
    valid: Optional[np.ndarray] = None
    n_fft: Optional[int] = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.values = np.asarray(self.values)
        if self.f.shape != self.values.shape:
            raise InvalidParameterError("frequency and value arrays differ in length")
        if self.f.size > 1 and np.any(np.diff(self.f) <= 0):
            raise InvalidParameterError("spectrum frequencies must be strictly increasing")
        if self.valid is None:
            self.valid = np.isfinite(self.values)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def db(self, floor: float = 1e-30) -> np.ndarray:
        return 20.0 * np.log10(np.maximum(self.magnitude, floor))

    def energy(self) -> float:
        """Parseval sum of the one-sided spectrum; equals sum(x**2) * dt for an unpadded rect record."""
        if self.f.size < 2:
            return float(np.sum(np.abs(self.values) ** 2))
        df = self.f[1] - self.f[0]
        weight = np.full(self.f.size, 2.0)
        weight[0] = 1.0
        if self.n_fft is not None and self.n_fft % 2 == 0:
            weight[-1] = 1.0
        return float(np.sum(weight * np.abs(self.values) ** 2) * df)

    def band(self, f_lo: float, f_hi: float) -> "Spectrum":
        sel = (self.f >= f_lo) & (self.f <= f_hi)
        return replace(self, f=self.f[sel], values=self.values[sel], valid=self.valid[sel])


def spectrum(series, dt: float, window: str = "rect", pad_factor: int = 1) -> Spectrum:
    """One-sided spectrum of a real series sampled every dt seconds."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidParameterError("spectrum needs a non-empty 1-D series")
    if dt <= 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    if window not in WINDOWS:
        raise InvalidParameterError(f"window must be one of {WINDOWS}, got {window!r}")
    if int(pad_factor) != pad_factor or pad_factor < 1:
        raise InvalidParameterError(f"pad_factor must be an integer >= 1, got {pad_factor}")
    n = x.size
    if window == "hann":
        x = x * signal.windows.hann(n, sym=False)
    elif window == "decay":
        x = x * signal.windows.hann(2 * n, sym=False)[n:]
    n_fft = n * int(pad_factor)
    values = dt * fft.rfft(x, n_fft)
    f = fft.rfftfreq(n_fft, dt)
    return Spectrum(f=f, values=values, window=window, record_length=n * dt, n_fft=n_fft)


@dataclass
class SParameters:
    f: np.ndarray
    s21: np.ndarray
    s11: np.ndarray
    valid: np.ndarray
    window: str
    record_length: float

    def s21_spectrum(self) -> Spectrum:
        return Spectrum(self.f, self.s21, self.window, self.record_length, self.valid.copy())

    def s11_spectrum(self) -> Spectrum:
        return Spectrum(self.f, self.s11, self.window, self.record_length, self.valid.copy())


def s_parameters(
    input_port_v,
    output_port_v,
    dt: float,
    incident,
    window: str = "rect",
    pad_factor: int = 1,
    floor_db: float = -40.0,
) -> SParameters:
    """
    S21 = V_out / V_inc and S11 = (V_in - V_inc) / V_inc per frequency.

    Bins where the incident spectrum is more than `floor_db` below its maximum are invalid (NaN).
    """
    v_in = spectrum(input_port_v, dt, window, pad_factor)
    v_out = spectrum(output_port_v, dt, window, pad_factor)
    v_inc = spectrum(incident, dt, window, pad_factor)
    mag = v_inc.magnitude
    if mag.max() <= 0:
        raise InvalidParameterError("incident wave is identically zero")
    valid = mag >= mag.max() * 10.0 ** (floor_db / 20.0)
    safe = np.where(valid, v_inc.values, 1.0)
    s21 = np.where(valid, v_out.values / safe, np.nan)
    s11 = np.where(valid, (v_in.values - v_inc.values) / safe, np.nan)
    return SParameters(v_inc.f, s21, s11, valid, window, v_inc.record_length)


def s21(input_port_v, output_port_v, dt: float, reference_run, **kwargs) -> Spectrum:
    """Transmission spectrum normalised by the incident wave of `reference_run`."""
    return s_parameters(input_port_v, output_port_v, dt, reference_run, **kwargs).s21_spectrum()


@dataclass(frozen=True)
class ModeRecord:
    f0: float
    q_loaded: float
    amplitude: float
    classification: str = UNCLASSIFIED
    refined: bool = True

    def __post_init__(self):
        if not self.f0 > 0 or not self.q_loaded > 0:
            raise InvalidParameterError(f"mode needs f0 > 0 and Q > 0, got f0={self.f0}, Q={self.q_loaded}")

    @property
    def linewidth(self) -> float:
        return self.f0 / self.q_loaded


def _lorentzian(s, amp, center, width, floor):
    return amp / (1.0 + (2.0 * (s - center) / width) ** 2) + floor


def _half_power_width(f: np.ndarray, p: np.ndarray, ip: int, floor: float) -> Tuple[int, int]:
    half = floor + 0.5 * (p[ip] - floor)
    lo = ip
    while lo > 0 and p[lo - 1] > half:
        lo -= 1
    hi = ip
    while hi < len(p) - 1 and p[hi + 1] > half:
        hi += 1
    return max(lo - 1, 0), min(hi + 1, len(p) - 1)


def _fit_peak(f: np.ndarray, p: np.ndarray, ip: int, floor: float, limit: Tuple[float, float]):
    """Lorentzian fit of the power around bin ip; returns (f0, Q, refined)."""
    lo, hi = _half_power_width(f, p, ip, floor)
    df = f[1] - f[0]
    fwhm = max(f[hi] - f[lo], df)
    f_peak = f[ip]
    q_est = f_peak / fwhm
    half_span = max(3.0 * fwhm, 5.0 * df)
    lo_f, hi_f = max(f_peak - half_span, limit[0]), min(f_peak + half_span, limit[1])
    sel = (f >= lo_f) & (f <= hi_f)
    if np.count_nonzero(sel) < 5:
        return f_peak, q_est, False
    s = (f[sel] - f_peak) / fwhm
    y = p[sel]
    p0 = (max(p[ip] - floor, 1e-12), 0.0, 1.0, max(floor, 0.0))
    bounds = ([0.0, s.min(), 1e-3, 0.0], [np.inf, s.max(), 1e3, p[ip]])
    try:
        popt, _ = optimize.curve_fit(_lorentzian, s, y, p0=p0, bounds=bounds, maxfev=5000)
    except (RuntimeError, ValueError) as e:
        logging.debug("Lorentzian fit at %.6g Hz failed: %s", f_peak, e)
        return f_peak, q_est, False
    _, center, width, _ = popt
    f0 = f_peak + center * fwhm
    if not (np.all(np.isfinite(popt)) and lo_f < f0 < hi_f):
        return f_peak, q_est, False
    return f0, f0 / (width * fwhm), True


def find_peaks(
    spec: Spectrum,
    band: Tuple[float, float],
    min_prominence_db: float = 6.0,
    baseline_fraction: float = 0.25,
    dynamic_range_db: float = 60.0,
    guard_bins: Optional[float] = None,
) -> List[ModeRecord]:
    """
    Resonances inside `band`, ordered by frequency.

    A peak must stand `min_prominence_db` above a running-median baseline of the power spectrum
    and above the strongest peak minus `dynamic_range_db`. Weaker peaks within the window's guard
    distance of a stronger one are dropped as leakage. Each survivor is refined by a Lorentzian fit
    on the normalised power; when the fit fails the raw estimate is kept with refined=False.
    """
    f_lo, f_hi = band
    if not f_lo < f_hi:
        raise InvalidParameterError(f"band must satisfy f_lo < f_hi, got {band}")
    part = spec.band(f_lo, f_hi)
    sel = part.valid & np.isfinite(part.values)
    f = part.f[sel]
    if f.size < 3:
        return []
    power = np.abs(part.values[sel]) ** 2
    p_max = power.max()
    if p_max <= 0:
        return []
    p = power / p_max
    level = 10.0 * np.log10(np.maximum(p, 1e-30))
    size = max(3, int(baseline_fraction * f.size) | 1)
    baseline = ndimage.median_filter(level, size=size, mode="nearest")
    idx, _ = signal.find_peaks(level, prominence=min_prominence_db)
    idx = [i for i in idx if level[i] - baseline[i] >= min_prominence_db and level[i] >= -dynamic_range_db]

    if guard_bins is None:
        guard_bins = GUARD_BINS.get(spec.window, 4)
    guard = guard_bins / spec.record_length if spec.record_length else 0.0
    kept: List[int] = []
    for i in sorted(idx, key=lambda i: -p[i]):
        if all(abs(f[i] - f[j]) > guard for j in kept):
            kept.append(i)
    kept.sort()

    modes = []
    for n, i in enumerate(kept):
        left = 0.5 * (f[kept[n - 1]] + f[i]) if n > 0 else f[0]
        right = 0.5 * (f[i] + f[kept[n + 1]]) if n + 1 < len(kept) else f[-1]
        floor = float(10.0 ** (baseline[i] / 10.0))
        f0, q, refined = _fit_peak(f, p, i, floor, (left, right))
        modes.append(ModeRecord(f0=float(f0), q_loaded=float(q), amplitude=float(np.sqrt(power[i])), refined=refined))
    return modes


def mode_table(
    peaks: Sequence[ModeRecord],
    band: Tuple[float, float],
    designed_frequency: Optional[float],
    relative_window: Optional[float] = None,
) -> List[ModeRecord]:
    """
    Classify peaks inside the band. The peak nearest the designed chip frequency, within three of
    its own linewidths, is the chip resonance; the rest are package modes. A `relative_window`
    widens the acceptance to that fraction of the designed frequency when it is larger.
    """
    in_band = sorted((m for m in peaks if band[0] <= m.f0 <= band[1]), key=lambda m: m.f0)
    chip: Optional[ModeRecord] = None
    if designed_frequency is not None:
        candidates = [
            m
            for m in in_band
            if abs(m.f0 - designed_frequency) <= max(3.0 * m.linewidth, (relative_window or 0.0) * designed_frequency)
        ]
        if candidates:
            chip = min(candidates, key=lambda m: abs(m.f0 - designed_frequency))
    return [replace(m, classification=CHIP_RESONANCE if m is chip else PACKAGE_MODE) for m in in_band]
