# app/phasemap.py
"""
Intensity <-> phase conversion for an IM biased at minimum, batch
normalisation of measured traces, and per-slot feature extraction.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import correlate, correlation_lags

from app import config
from app.errors import DataQualityWarning, ValidationError
from app.waveform import (
    PATH_ALPHABET,
    PHASE_LEVELS,
    SELECTION_LEVELS,
    NominalPattern,
    PulseTrainSpec,
    Symbol,
    Waveform,
    make_pulse_train,
)

WINDOW_RULES = ("center_sample", "center_mean_50pct")
ZERO_LEVEL_SYMBOLS = (Symbol.S0, Symbol.OFF)


@dataclass(frozen=True)
class NormalizationContext:
    dc_offset: float
    global_max: float

    def __post_init__(self):
        if not self.global_max > self.dc_offset:
            raise ValidationError(
                f"global max {self.global_max!r} must exceed the DC offset {self.dc_offset!r}"
            )

    @property
    def span(self) -> float:
        return self.global_max - self.dc_offset


@dataclass(frozen=True)
class PulseGrid:
    """Ideal clock grid of a trace: slot k starts at k/rep_rate + alignment_offset."""

    rep_rate: float
    alignment_offset: Optional[float] = None
    pulse_width: float = config.DEFAULT_PULSE_WIDTH

    @property
    def slot_period(self) -> float:
        return 1.0 / self.rep_rate


@dataclass(frozen=True)
class PulseRecord:
    slot_index: int
    nominal: Symbol
    phi: Optional[float] = None
    peak_intensity: Optional[float] = None
    peak_time_offset: Optional[float] = None
    spacing_prev_ns: Optional[int] = None
    trace_index: int = 0


def _check_intensity(values: np.ndarray, tolerance: float) -> np.ndarray:
    if np.any(values < -tolerance) or np.any(values > 1 + tolerance):
        bad = values[(values < -tolerance) | (values > 1 + tolerance)]
        raise ValidationError(
            f"normalised intensity {bad.flat[0]!r} outside [0, 1] beyond tolerance {tolerance:g}"
        )
    return np.clip(values, 0.0, 1.0)


def intensity_to_phase(intensity, tolerance: float = config.CLAMP_TOLERANCE):
    """phi = 2*arccos(sqrt(1 - I)), evaluated as 2*atan2(sqrt(I), sqrt(1 - I))."""
    values = _check_intensity(np.asarray(intensity, dtype=float), tolerance)
    phi = 2.0 * np.arctan2(np.sqrt(values), np.sqrt(1.0 - values))
    return float(phi) if phi.ndim == 0 else phi


def phase_to_intensity(phi):
    values = np.asarray(phi, dtype=float)
    if np.any(values < 0) or np.any(values > math.pi):
        raise ValidationError("phase outside [0, pi]")
    out = np.sin(values / 2.0) ** 2
    return float(out) if out.ndim == 0 else out


def amplitude_to_phase(amplitude):
    """Linear model output: normalised amplitude 1 corresponds to a pi phase change."""
    out = math.pi * np.asarray(amplitude, dtype=float)
    return float(out) if out.ndim == 0 else out


def normalization_context(traces: Sequence[Waveform], dc_offset: float = 0.0) -> NormalizationContext:
    if not traces:
        raise ValidationError("no traces to normalise")
    global_max = max(float(np.max(t.samples)) for t in traces)
    return NormalizationContext(float(dc_offset), global_max)


def normalize_traces(
    traces: Sequence[Waveform],
    ctx: Optional[NormalizationContext] = None,
    tolerance: float = config.CLAMP_TOLERANCE,
) -> List[Waveform]:
    """(v - dc_offset) / (global_max - dc_offset); values within `tolerance` of [0, 1] are clamped."""
    ctx = ctx or normalization_context(traces)
    out = []
    for trace in traces:
        v = (trace.samples - ctx.dc_offset) / ctx.span
        v = np.where((v < 0) & (v >= -tolerance), 0.0, v)
        v = np.where((v > 1) & (v <= 1 + tolerance), 1.0, v)
        out.append(trace.with_samples(v, units="normalized"))
    return out


def _window_indices(trace: Waveform, centre: float, half_width: float) -> np.ndarray:
    fs = trace.sample_rate
    lo = math.ceil((centre - half_width) * fs - 1e-9)
    hi = math.floor((centre + half_width) * fs + 1e-9)
    if hi < lo:
        lo = hi = int(round(centre * fs))
    return np.arange(lo, hi + 1)


def estimate_dc_offset(
    traces: Sequence[Waveform],
    patterns: Sequence[NominalPattern],
    grid: PulseGrid,
) -> float:
    """Mean baseline over the central pulse-width window of every zero-level slot."""
    pieces = []
    for trace, pattern in zip(traces, patterns):
        offset = grid.alignment_offset or 0.0
        for k, symbol in enumerate(pattern):
            if symbol not in ZERO_LEVEL_SYMBOLS:
                continue
            centre = (k + 0.5) * grid.slot_period + offset
            idx = _window_indices(trace, centre, grid.pulse_width / 2)
            idx = idx[(idx >= 0) & (idx < len(trace))]
            pieces.append(trace.samples[idx])
    if not pieces or sum(p.size for p in pieces) == 0:
        raise ValidationError("no zero-level slots to estimate the DC offset from")
    return float(np.mean(np.concatenate(pieces)))


def default_levels(pattern: NominalPattern) -> dict:
    if set(pattern.alphabet) <= set(PHASE_LEVELS):
        return PHASE_LEVELS
    if set(pattern.alphabet) <= set(SELECTION_LEVELS):
        return SELECTION_LEVELS
    return {s: 1.0 for s in PATH_ALPHABET}


def align_to_pattern(
    trace: Waveform,
    pattern: NominalPattern,
    grid: PulseGrid,
    min_confidence: float = config.ALIGNMENT_MIN_CONFIDENCE,
) -> float:
    """Delay (s) of `trace` against the ideal train of `pattern`, within half a slot."""
    spec = PulseTrainSpec(grid.rep_rate, grid.pulse_width, default_levels(pattern),
                          len(pattern), trace.sample_rate)
    template = make_pulse_train(spec, pattern).samples
    a = trace.samples - trace.samples.mean()
    b = template - template.mean()
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0:
        raise ValidationError("cannot align a flat trace or pattern")
    xcorr = correlate(a, b, mode="full", method="fft")
    lags = correlation_lags(a.size, b.size, mode="full")
    reach = int(0.5 * grid.slot_period * trace.sample_rate)
    allowed = np.abs(lags) <= reach
    best = np.argmax(np.where(allowed, xcorr, -np.inf))
    confidence = xcorr[best] / norm
    if confidence < min_confidence:
        raise ValidationError(
            f"alignment confidence {confidence:.3f} below threshold {min_confidence:.3f}"
        )
    return float(lags[best]) / trace.sample_rate


def _resolve_offset(trace, pattern, grid, min_confidence) -> float:
    if grid.alignment_offset is not None:
        return grid.alignment_offset
    return align_to_pattern(trace, pattern, grid, min_confidence)


def extract_pulse_phases(
    trace: Waveform,
    pattern: NominalPattern,
    grid: PulseGrid,
    window: str = "center_mean_50pct",
    min_confidence: float = config.ALIGNMENT_MIN_CONFIDENCE,
    trace_index: int = 0,
) -> List[PulseRecord]:
    """One record per slot; `trace` is already in radians."""
    if window not in WINDOW_RULES:
        raise ValidationError(f"window must be one of {WINDOW_RULES}")
    offset = _resolve_offset(trace, pattern, grid, min_confidence)
    records = []
    for k, symbol in enumerate(pattern):
        centre = (k + 0.5) * grid.slot_period + offset
        if window == "center_sample":
            idx = np.array([int(round(centre * trace.sample_rate))])
        else:
            idx = _window_indices(trace, centre, grid.pulse_width / 4)
        if idx[0] < 0 or idx[-1] >= len(trace):
            raise ValidationError(f"trace does not span slot {k} after alignment")
        records.append(PulseRecord(k, symbol, phi=float(np.mean(trace.samples[idx])),
                                   trace_index=trace_index))
    return records


def _spacings(
    pattern: NominalPattern, rep_rate: float, strict: bool = True
) -> List[Tuple[int, Optional[int]]]:
    """(slot, spacing to previous pulse of the same IM in ns) for every pulse-carrying slot.

    Spacings are whole nanoseconds. A gap that is not one raises ValidationError for an
    ON/OFF pattern when `strict`; otherwise that pulse gets no spacing label.
    """
    if set(pattern.alphabet) <= set(SELECTION_LEVELS):
        slots = [k for k, s in enumerate(pattern) if s is Symbol.ON]
        previous = {k: p for p, k in zip([None] + slots[:-1], slots)}
    elif set(pattern.alphabet) <= set(PATH_ALPHABET):
        strict = False
        slots, previous, last = list(range(len(pattern))), {}, {}
        for k, s in enumerate(pattern):
            previous[k] = last.get(s)
            last[s] = k
    else:
        slots = list(range(len(pattern)))
        previous = {k: None for k in slots}
    out = []
    for k in slots:
        p = previous[k]
        if p is None:
            out.append((k, None))
            continue
        gap_ns = (k - p) * 1e9 / rep_rate
        whole = int(round(gap_ns))
        if whole >= 1 and abs(gap_ns - whole) <= 1e-6:
            out.append((k, whole))
        elif strict:
            raise ValidationError(
                f"spacing {gap_ns:g} ns between slots {p} and {k} is not a whole number of ns "
                f"at {rep_rate:g} Hz"
            )
        else:
            out.append((k, None))
    return out


def extract_pulse_peaks(
    trace: Waveform,
    grid: PulseGrid,
    pattern: Optional[NominalPattern] = None,
    min_peak: float = 0.0,
    trace_index: int = 0,
) -> List[PulseRecord]:
    """Peak value and sub-sample peak time per slot, timing relative to the ideal clock grid."""
    fs = trace.sample_rate
    offset = grid.alignment_offset or 0.0
    strict = pattern is not None
    if pattern is None:
        n_slots = int(math.floor(trace.duration * grid.rep_rate + 1e-9))
        pattern = NominalPattern((Symbol.ON,) * n_slots, alphabet=(Symbol.ON, Symbol.OFF))
    s = trace.samples
    records = []
    for k, spacing in _spacings(pattern, grid.rep_rate, strict):
        start = math.ceil((k * grid.slot_period + offset) * fs - 1e-9)
        stop = math.ceil(((k + 1) * grid.slot_period + offset) * fs - 1e-9)
        start, stop = max(start, 0), min(stop, s.size)
        if stop <= start or np.max(s[start:stop]) <= min_peak:
            warnings.warn(f"trace {trace_index}: slot {k} has no pulse", DataQualityWarning)
            continue
        i = start + int(np.argmax(s[start:stop]))
        delta = 0.0
        if 0 < i < s.size - 1:
            y0, y1, y2 = s[i - 1], s[i], s[i + 1]
            denom = y0 - 2.0 * y1 + y2
            if denom != 0:
                delta = float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))
        peak_time = (i + delta) / fs
        records.append(PulseRecord(
            k, pattern[k],
            peak_intensity=float(s[i]),
            peak_time_offset=peak_time - (k * grid.slot_period + offset),
            spacing_prev_ns=spacing,
            trace_index=trace_index,
        ))
    return records


def collect_pulse_windows(
    trace: Waveform,
    records: Iterable[PulseRecord],
    grid: PulseGrid,
) -> List[Tuple[PulseRecord, Waveform]]:
    """Slot-long cut-out of `trace` for each record, all windows the same length."""
    fs = trace.sample_rate
    width = int(math.floor(grid.slot_period * fs + 1e-9))
    offset = grid.alignment_offset or 0.0
    out = []
    for record in records:
        start = math.ceil((record.slot_index * grid.slot_period + offset) * fs - 1e-9)
        if start < 0 or start + width > len(trace):
            warnings.warn(f"slot {record.slot_index} window leaves the trace", DataQualityWarning)
            continue
        piece = Waveform(trace.samples[start:start + width], fs, 0.0, trace.units)
        out.append((record, piece))
    return out
