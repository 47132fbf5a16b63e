# app/linsys.py
"""
Equipment chain as cascaded linear time-invariant stages, applied in the
frequency domain.

A FrequencyResponse is evaluable at any real frequency (Hz) and obeys
H(-f) = conj(H(f)), so real waveforms stay real after filtering.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import fft as spf
from scipy.signal import bessel

from app import config
from app.errors import ChainError, ValidationError
from app.waveform import Waveform, resample

KINDS = ("bessel", "tabulated", "ideal_delay", "identity", "cascade")
PHASE_MODES = ("measured", "ideal_linear")
EXTRAPOLATIONS = ("hold", "rolloff_db_per_octave")
MAX_BESSEL_ORDER = 10


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    kind: str
    name: str = ""
    order: int = 0
    cutoff_hz: float = 0.0
    table: Optional[np.ndarray] = None
    phase_mode: str = "ideal_linear"
    delay_s: float = 0.0
    extrapolation: str = "rolloff_db_per_octave"
    rolloff_db_per_octave: float = config.ROLLOFF_DB_PER_OCTAVE
    stages: tuple = field(default=())
    _zpk: Optional[tuple] = field(default=None, repr=False)

    def evaluate(self, f) -> np.ndarray:
        """Complex response at frequencies `f` (Hz, any sign)."""
        f = np.asarray(f, dtype=float)
        if self.kind == "identity":
            return np.ones(f.shape, dtype=complex)
        if self.kind == "ideal_delay":
            return np.exp(-2j * np.pi * f * self.delay_s)
        if self.kind == "bessel":
            z, p, k = self._zpk
            s = 1j * f[..., None] / self.cutoff_hz
            num = np.prod(s - z, axis=-1) if len(z) else 1.0
            return k * num / np.prod(s - p, axis=-1)
        if self.kind == "tabulated":
            return self._evaluate_table(f)
        if self.kind == "cascade":
            out = np.ones(f.shape, dtype=complex)
            for stage in self.stages:
                out = out * stage.evaluate(f)
            return out
        raise ValidationError(f"unknown response kind '{self.kind}'")

    def _evaluate_table(self, f: np.ndarray) -> np.ndarray:
        f_tab, mag_tab = self.table[:, 0], self.table[:, 1]
        af = np.abs(f)
        mag = np.full(af.shape, mag_tab[0])
        inside = (af >= f_tab[0]) & (af <= f_tab[-1])
        mag[inside] = np.interp(np.log10(af[inside]), np.log10(f_tab), mag_tab)
        above = af > f_tab[-1]
        if self.extrapolation == "rolloff_db_per_octave":
            mag[above] = mag_tab[-1] - self.rolloff_db_per_octave * np.log2(af[above] / f_tab[-1])
        else:
            mag[above] = mag_tab[-1]

        if self.phase_mode == "measured":
            phase_tab = np.deg2rad(self.table[:, 2])
            phase = np.interp(af, f_tab, phase_tab)
            below = af < f_tab[0]
            # linear from 0 rad at DC keeps H(0) real
            phase[below] = phase_tab[0] * af[below] / f_tab[0]
        else:
            phase = -2 * np.pi * af * self.delay_s
        h = 10 ** (mag / 20) * np.exp(1j * phase)
        return np.where(f < 0, np.conj(h), h)

    @property
    def dc_gain(self) -> float:
        return float(np.real(self.evaluate(np.array([0.0]))[0]))

    @property
    def bandwidth_hz(self) -> float:
        """Highest frequency this stage meaningfully shapes (0 for all-pass stages)."""
        if self.kind == "bessel":
            return self.cutoff_hz
        if self.kind == "tabulated":
            f_tab, mag_tab = self.table[:, 0], self.table[:, 1]
            below_3db = np.nonzero(mag_tab <= mag_tab.max() - 3.0)[0]
            return float(f_tab[below_3db[0]] if below_3db.size else f_tab[-1])
        if self.kind == "cascade":
            return max((s.bandwidth_hz for s in self.stages), default=0.0)
        return 0.0

    def describe(self) -> dict:
        info = {"kind": self.kind, "name": self.name}
        if self.kind == "bessel":
            info.update(order=self.order, cutoff_hz=self.cutoff_hz)
        elif self.kind == "tabulated":
            info.update(points=int(self.table.shape[0]), phase_mode=self.phase_mode,
                        extrapolation=self.extrapolation, delay_s=self.delay_s)
        elif self.kind == "ideal_delay":
            info.update(delay_s=self.delay_s)
        elif self.kind == "cascade":
            info.update(stages=[s.describe() for s in self.stages])
        return info


@dataclass(frozen=True, eq=False)
class ChainConfig:
    stages: tuple
    output_sample_rate: float = config.SCOPE_SAMPLE_RATE

    def __post_init__(self):
        if not self.stages:
            raise ValidationError("a chain needs at least one stage")
        if not self.output_sample_rate > 0:
            raise ValidationError("output_sample_rate must be positive")
        object.__setattr__(self, "stages", tuple(self.stages))

    @property
    def response(self) -> FrequencyResponse:
        return chain(self.stages)

    def describe(self) -> dict:
        return {
            "stages": [s.describe() for s in self.stages],
            "output_sample_rate": self.output_sample_rate,
        }


def identity(name: str = "identity") -> FrequencyResponse:
    return FrequencyResponse("identity", name)


def ideal_delay(delay_s: float, name: str = "delay") -> FrequencyResponse:
    return FrequencyResponse("ideal_delay", name, delay_s=float(delay_s))


def design_bessel(order: int, cutoff_hz: float, name: str = "") -> FrequencyResponse:
    """Analog Bessel-Thomson low-pass with |H(cutoff_hz)| = -3 dB."""
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_BESSEL_ORDER:
        raise ValidationError(f"unsupported Bessel order {order!r} (1..{MAX_BESSEL_ORDER})")
    if not cutoff_hz > 0:
        raise ValidationError(f"cutoff must be positive, got {cutoff_hz}")
    # prototype at 1 rad/s, evaluated at s = j f / cutoff
    z, p, k = bessel(int(order), 1.0, btype="low", analog=True, output="zpk", norm="mag")
    return FrequencyResponse(
        "bessel", name or f"bessel{order}@{cutoff_hz / 1e9:g}GHz",
        order=int(order), cutoff_hz=float(cutoff_hz), _zpk=(np.asarray(z), np.asarray(p), float(k)),
    )


def tabulated_response(
    table,
    phase_mode: str = "measured",
    extrapolation: str = "rolloff_db_per_octave",
    *,
    rolloff_db_per_octave: float = config.ROLLOFF_DB_PER_OCTAVE,
    delay_s: float = 0.0,
    name: str = "table",
) -> FrequencyResponse:
    """Response interpolated from (f_hz, mag_db[, phase_deg]) rows.

    Magnitude is linear in dB against log-frequency. With phase_mode
    "ideal_linear" the phase is -2*pi*f*delay_s and any phase column is ignored.
    """
    if phase_mode not in PHASE_MODES:
        raise ValidationError(f"phase_mode must be one of {PHASE_MODES}")
    if extrapolation not in EXTRAPOLATIONS:
        raise ValidationError(f"extrapolation must be one of {EXTRAPOLATIONS}")
    rows = np.asarray(table, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValidationError("a response table needs at least 2 points")
    if rows.shape[1] < 2:
        raise ValidationError("response table rows need f_hz and mag_db")
    if phase_mode == "measured" and rows.shape[1] < 3:
        raise ValidationError("phase_mode 'measured' requires a phase_deg column")
    if not np.all(np.isfinite(rows)):
        raise ValidationError("response table contains non-finite values")
    if rows[0, 0] <= 0:
        raise ValidationError("table frequencies must be positive")
    if np.any(np.diff(rows[:, 0]) <= 0):
        raise ValidationError("table frequencies must be strictly ascending")
    rows = rows.copy()
    rows.setflags(write=False)
    return FrequencyResponse(
        "tabulated", name, table=rows, phase_mode=phase_mode, delay_s=float(delay_s),
        extrapolation=extrapolation, rolloff_db_per_octave=float(rolloff_db_per_octave),
    )


def chain(stages: Sequence[FrequencyResponse]) -> FrequencyResponse:
    """Cascade: pointwise product of the stage responses."""
    stages = tuple(stages)
    if not stages:
        raise ValidationError("chain() needs at least one stage")
    if len(stages) == 1:
        return stages[0]
    return FrequencyResponse("cascade", "+".join(s.name for s in stages), stages=stages)


def fft_length(n: int) -> int:
    """Next power of two >= 2n."""
    return 1 << int(np.ceil(np.log2(max(2 * n, 2))))


def apply_response(wf: Waveform, resp: FrequencyResponse) -> Waveform:
    """Filter `wf` by `resp` with zero-padded FFT convolution; output keeps wf's length."""
    n = len(wf)
    n_fft = fft_length(n)
    freqs = spf.rfftfreq(n_fft, d=wf.dt)
    h = resp.evaluate(freqs)
    if not np.all(np.isfinite(h)):
        raise ChainError(f"response '{resp.name}' is not finite up to {freqs[-1]:g} Hz")
    spectrum = spf.rfft(wf.samples, n_fft) * h
    out = spf.irfft(spectrum, n_fft)[:n]
    return wf.with_samples(out)


def impulse_response(resp: FrequencyResponse, n: int, sample_rate: float) -> np.ndarray:
    """Circular impulse response of `resp` on an n-point grid (index k <-> lag k, wrapped)."""
    freqs = spf.rfftfreq(n, d=1.0 / sample_rate)
    return spf.irfft(resp.evaluate(freqs), n)


def simulate_chain(drive: Waveform, cfg: ChainConfig) -> Waveform:
    """Propagate a drive waveform through every stage, then sample at the output rate."""
    bandwidth = max(s.bandwidth_hz for s in cfg.stages)
    if drive.sample_rate < 2 * bandwidth:
        raise ValidationError(
            f"drive sample rate {drive.sample_rate:g} Sa/s cannot represent {bandwidth:g} Hz content"
        )
    try:
        filtered = apply_response(drive, cfg.response)
    except ValidationError:
        raise
    except (FloatingPointError, ValueError) as exc:
        raise ChainError(f"chain propagation failed: {exc}") from exc
    return resample(filtered, cfg.output_sample_rate)
