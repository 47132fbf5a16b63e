# app/sourcesim.py
"""
Behavioural model of the path-selection source: gain-switched phase
generation, asymmetric-MZI fringe scans, polarisation drift on the Poincare
sphere, per-path ON/OFF selection and the stable-point IM transfer.

The survival law p = exp(-(i_threshold - i_min) / i_scale) is a
phenomenological stand-in; i_scale has to be calibrated per laser.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from app import config
from app.errors import ValidationError
from app.linsys import FrequencyResponse, ChainConfig, apply_response, ideal_delay, simulate_chain
from app.waveform import (
    PATH_ALPHABET,
    SELECTION_ALPHABET,
    SELECTION_LEVELS,
    NominalPattern,
    PulseTrainSpec,
    Symbol,
    Waveform,
    make_pulse_train,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GainSwitchConfig:
    i_min: float
    i_max: float = config.I_MAX_MA
    i_threshold: float = config.I_THRESHOLD_MA
    i_scale: float = config.I_SCALE_MA
    jitter_sigma: float = 0.0
    seed: int = 0
    survival: Optional[float] = None  # forces p when set

    def __post_init__(self):
        if not self.i_min < self.i_threshold < self.i_max:
            raise ValidationError(
                f"need i_min < i_threshold < i_max, got {self.i_min}, {self.i_threshold}, {self.i_max}"
            )
        if self.i_scale <= 0:
            raise ValidationError("i_scale must be positive")
        if self.jitter_sigma < 0:
            raise ValidationError("jitter_sigma must be non-negative")
        if self.survival is not None and not 0.0 <= self.survival <= 1.0:
            raise ValidationError("survival must lie in [0, 1]")

    @property
    def survival_probability(self) -> float:
        if self.survival is not None:
            return self.survival
        return math.exp(-(self.i_threshold - self.i_min) / self.i_scale)


@dataclass(frozen=True, eq=False)
class PulsePhaseSequence:
    phases: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        if np.any(phases < 0) or np.any(phases >= TWO_PI):
            raise ValidationError("phases must lie in [0, 2*pi)")
        phases.setflags(write=False)
        object.__setattr__(self, "phases", phases)

    def __len__(self) -> int:
        return self.phases.size


@dataclass(frozen=True)
class StokesVector:
    s1: float
    s2: float
    s3: float

    def __post_init__(self):
        norm = math.sqrt(self.s1 ** 2 + self.s2 ** 2 + self.s3 ** 2)
        if abs(norm - 1.0) > 1e-6:
            raise ValidationError(f"Stokes vector norm {norm:.9g} is not 1")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])

    @classmethod
    def normalized(cls, s1: float, s2: float, s3: float) -> "StokesVector":
        norm = math.sqrt(s1 * s1 + s2 * s2 + s3 * s3)
        if norm == 0:
            raise ValidationError("zero Stokes vector")
        return cls(s1 / norm, s2 / norm, s3 / norm)


@dataclass
class VisibilityResult:
    i_max_obs: float
    i_min_obs: float
    visibility: float
    delta_phi_grid: np.ndarray
    intensities: np.ndarray
    errors: np.ndarray
    label: str = ""

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValidationError(f"visibility {self.visibility!r} outside [0, 1]")


@dataclass
class DriftSeries:
    times: np.ndarray
    angles: np.ndarray
    label: str = ""
    limit_rad: float = config.DRIFT_LIMIT_RAD

    @property
    def max_angle(self) -> float:
        return float(np.max(self.angles))

    @property
    def within_limit(self) -> bool:
        return self.max_angle < self.limit_rad


@dataclass(frozen=True)
class PathSelection:
    patterns: Dict[Symbol, NominalPattern]
    delays_fs: Dict[Symbol, float] = field(default_factory=dict)
    gains: Dict[Symbol, float] = field(default_factory=dict)

    @property
    def on_counts(self) -> Dict[Symbol, int]:
        return {p: sum(s is Symbol.ON for s in pat) for p, pat in self.patterns.items()}


def gain_switched_phases(cfg: GainSwitchConfig, n: int) -> PulsePhaseSequence:
    """Pulse phases: inherited from the previous pulse with probability p (plus jitter), else fresh."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    fresh = rng.uniform(0.0, TWO_PI, n)
    survive = rng.random(n) < cfg.survival_probability
    jitter = rng.normal(0.0, cfg.jitter_sigma, n) if cfg.jitter_sigma > 0 else np.zeros(n)
    survive[0] = False

    steps = np.where(survive, jitter, 0.0)
    walk = np.cumsum(steps)
    seed_idx = np.maximum.accumulate(np.where(survive, 0, np.arange(n)))
    phases = np.mod(fresh[seed_idx] + (walk - walk[seed_idx]), TWO_PI)
    phases[phases >= TWO_PI] = 0.0
    return PulsePhaseSequence(phases, cfg.seed)


def _interference_terms(phases, intensities, imbalance_slots: int) -> Tuple[float, float, float]:
    """(mean incoherent term, mean w*cos(dphi), mean w*sin(dphi)) over the pulse pairs."""
    phi = phases.phases if isinstance(phases, PulsePhaseSequence) else np.asarray(phases, dtype=float)
    m = int(imbalance_slots)
    if m < 1:
        raise ValidationError("imbalance_slots must be >= 1")
    if phi.size <= m:
        raise ValidationError("need more pulses than the interferometer imbalance")
    intensity = np.broadcast_to(np.asarray(intensities, dtype=float), phi.shape)
    if np.any(intensity < 0):
        raise ValidationError("negative pulse intensity")
    late, early = intensity[m:], intensity[:-m]
    weight = np.sqrt(late * early) / 2.0
    dphi = phi[m:] - phi[:-m]
    base = float(np.mean((late + early) / 4.0))
    return base, float(np.mean(weight * np.cos(dphi))), float(np.mean(weight * np.sin(dphi)))


def mzi_interfere(phases, intensities, delta_phi: float, imbalance_slots: int = 1) -> float:
    """Slow-detector reading at one arm phase: mean over pulse pairs k, k-m."""
    base, c, s = _interference_terms(phases, intensities, imbalance_slots)
    return base + c * math.cos(delta_phi) - s * math.sin(delta_phi)


def fringe_scan(
    phases,
    intensities,
    grid: Sequence[float],
    imbalance_slots: int = 1,
    readings_per_point: int = 1,
    reading_noise: float = 0.0,
    seed: Optional[int] = None,
    label: str = "",
) -> VisibilityResult:
    """Interference reading per grid point and the visibility (Imax - Imin) / (Imax + Imin)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 16:
        raise ValidationError("fringe grid needs at least 16 points")
    if np.ptp(grid) < TWO_PI - 1e-9:
        raise ValidationError("fringe grid must span at least 2*pi")
    if readings_per_point < 1:
        raise ValidationError("readings_per_point must be >= 1")
    base, c, s = _interference_terms(phases, intensities, imbalance_slots)
    exact = base + c * np.cos(grid) - s * np.sin(grid)
    if reading_noise > 0:
        rng = np.random.default_rng(seed)
        readings = exact[:, None] + rng.normal(0.0, reading_noise, (grid.size, readings_per_point))
        means = readings.mean(axis=1)
        errors = readings.std(axis=1, ddof=1) if readings_per_point > 1 else np.zeros(grid.size)
    else:
        means, errors = exact, np.zeros(grid.size)
    i_max, i_min = float(means.max()), float(means.min())
    if i_max + i_min == 0:
        raise ValidationError("fringe scan is identically zero")
    if i_min < 0:
        raise ValidationError("negative fringe reading; reduce reading_noise")
    visibility = (i_max - i_min) / (i_max + i_min)
    return VisibilityResult(i_max, i_min, visibility, grid, means, errors, label)


def resistance_to_phase(resistance, r0: float, rad_per_ohm: float):
    """Linear thermistor calibration: delta_phi = (R - R0) * rad_per_ohm."""
    return (np.asarray(resistance, dtype=float) - r0) * rad_per_ohm


def angular_distance(a: StokesVector, b: StokesVector) -> float:
    """Great-circle angle between two points on the Poincare sphere, in [0, pi]."""
    va, vb = a.array, b.array
    dot = float(np.clip(np.dot(va, vb), -1.0, 1.0))
    cross = float(np.linalg.norm(np.cross(va, vb)))
    return math.atan2(cross, dot)


def drift_series(
    log: Sequence[Tuple[float, StokesVector]],
    label: str = "",
    limit_rad: float = config.DRIFT_LIMIT_RAD,
) -> DriftSeries:
    if not log:
        raise ValidationError("polarimeter log is empty")
    ref = log[0][1]
    times = np.array([t - log[0][0] for t, _ in log])
    angles = np.array([angular_distance(s, ref) for _, s in log])
    return DriftSeries(times, angles, label, limit_rad)


def select_paths(
    pattern: NominalPattern,
    per_path_delay_fs: Optional[Mapping] = None,
    per_path_gain: Optional[Mapping] = None,
) -> PathSelection:
    """Split a P1/P2/P3 pattern into one ON/OFF pattern per path IM."""
    stray = {s for s in pattern if s not in PATH_ALPHABET}
    if stray:
        raise ValidationError(f"unknown path symbols {sorted(s.value for s in stray)}")
    patterns = {
        path: NominalPattern(
            tuple(Symbol.ON if s is path else Symbol.OFF for s in pattern),
            pattern.seed, SELECTION_ALPHABET,
        )
        for path in PATH_ALPHABET
    }
    delays = {p: float((per_path_delay_fs or {}).get(p, 0.0)) for p in PATH_ALPHABET}
    gains = {p: float((per_path_gain or {}).get(p, 1.0)) for p in PATH_ALPHABET}
    return PathSelection(patterns, delays, gains)


def im_transmission(drive_in_vpi):
    """IM biased at minimum: T = sin^2(pi * v / 2), stable points at v = 0 and v = 1."""
    return np.sin(np.pi * np.asarray(drive_in_vpi, dtype=float) / 2.0) ** 2


def calibrate_vpi(spec: PulseTrainSpec, electrical: FrequencyResponse) -> float:
    """Drive scale at which an isolated pulse reaches exactly V_pi after the electrical chain."""
    n_slots = 16
    lone = PulseTrainSpec(spec.rep_rate, spec.pulse_width, SELECTION_LEVELS, n_slots, spec.sample_rate)
    symbols = [Symbol.OFF] * n_slots
    symbols[n_slots // 2] = Symbol.ON
    drive = make_pulse_train(lone, NominalPattern(tuple(symbols), alphabet=SELECTION_ALPHABET))
    peak = float(np.max(apply_response(drive, electrical).samples))
    if peak <= 0:
        raise ValidationError("electrical chain does not pass an isolated pulse")
    return 1.0 / peak


def modulate_intensity(drive: Waveform, electrical: FrequencyResponse, vpi_scale: float) -> Waveform:
    """Optical intensity behind an IM whose electrical drive went through `electrical`."""
    v = apply_response(drive, electrical).samples * vpi_scale
    return drive.with_samples(im_transmission(v), units="intensity")


def emulate_source_output(
    path_pattern: NominalPattern,
    selection: PathSelection,
    spec: PulseTrainSpec,
    electrical: FrequencyResponse,
    scope: ChainConfig,
    laser_pulse_width: float = config.LASER_PULSE_WIDTH,
) -> Waveform:
    """Gain-switched pulses gated by the three path IMs, recombined and seen by the scope."""
    laser_spec = PulseTrainSpec(spec.rep_rate, laser_pulse_width, SELECTION_LEVELS,
                                len(path_pattern), spec.sample_rate)
    envelope = make_pulse_train(laser_spec, NominalPattern((Symbol.ON,) * len(path_pattern),
                                                           alphabet=SELECTION_ALPHABET)).samples
    vpi_scale = calibrate_vpi(spec, electrical)
    total = np.zeros(spec.n_samples)
    for path in PATH_ALPHABET:
        drive = make_pulse_train(spec, selection.patterns[path])
        gated = modulate_intensity(drive, electrical, vpi_scale).samples * envelope
        optical = drive.with_samples(selection.gains[path] * gated, units="intensity")
        delay = selection.delays_fs[path] * 1e-15
        if delay:
            optical = apply_response(optical, ideal_delay(delay, name=f"{path.value}-delay"))
        total += optical.samples
    return simulate_chain(Waveform(total, spec.sample_rate, 0.0, "intensity"), scope)
