# app/waveform.py
"""Drive and optical waveforms, nominal symbol patterns and resampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.signal import resample_poly

from app import config
from app.errors import ValidationError


class Symbol(str, Enum):
    """Per-slot nominal symbol. Phase symbols carry their nominal phase."""

    S0 = "S0"
    S_HALF = "S_half"
    S_PI = "S_pi"
    ON = "ON"
    OFF = "OFF"
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"

    @property
    def phase(self) -> float:
        try:
            return _NOMINAL_PHASE[self]
        except KeyError:
            raise ValidationError(f"symbol {self.value} has no nominal phase") from None

    @classmethod
    def parse(cls, text: str) -> "Symbol":
        try:
            return cls(text.strip())
        except ValueError:
            raise ValidationError(f"unknown symbol '{text}'") from None


_NOMINAL_PHASE = {Symbol.S0: 0.0, Symbol.S_HALF: math.pi / 2, Symbol.S_PI: math.pi}

PHASE_ALPHABET = (Symbol.S0, Symbol.S_HALF, Symbol.S_PI)
SELECTION_ALPHABET = (Symbol.ON, Symbol.OFF)
PATH_ALPHABET = (Symbol.P1, Symbol.P2, Symbol.P3)

# Drive amplitude per symbol, in units of V_pi (1.0 -> phase change of pi)
PHASE_LEVELS = {Symbol.S0: 0.0, Symbol.S_HALF: 0.5, Symbol.S_PI: 1.0}
SELECTION_LEVELS = {Symbol.OFF: 0.0, Symbol.ON: 1.0}


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled real time series."""

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0
    units: str = ""

    def __post_init__(self):
        data = np.array(self.samples, dtype=float, copy=True).reshape(-1)
        if not self.sample_rate > 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        if data.size == 0:
            raise ValidationError("waveform has no samples")
        if not np.all(np.isfinite(data)):
            raise ValidationError("waveform contains NaN or Inf samples")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.sample_rate

    def with_samples(self, samples: np.ndarray, units: Optional[str] = None) -> "Waveform":
        return Waveform(samples, self.sample_rate, self.t0, self.units if units is None else units)

    def scaled(self, factor: float) -> "Waveform":
        return self.with_samples(self.samples * factor)


@dataclass(frozen=True)
class NominalPattern:
    symbols: tuple
    seed: Optional[int] = None
    alphabet: tuple = field(default=())

    def __post_init__(self):
        symbols = tuple(s if isinstance(s, Symbol) else Symbol.parse(s) for s in self.symbols)
        if not symbols:
            raise ValidationError("pattern is empty")
        alphabet = tuple(self.alphabet) or tuple(dict.fromkeys(symbols))
        stray = set(symbols) - set(alphabet)
        if stray:
            raise ValidationError(f"pattern symbols {sorted(s.value for s in stray)} not in alphabet")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "alphabet", alphabet)

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __getitem__(self, k):
        return self.symbols[k]

    @property
    def phases(self) -> np.ndarray:
        return np.array([s.phase for s in self.symbols])

    def indices_of(self, symbol: Symbol) -> np.ndarray:
        return np.array([k for k, s in enumerate(self.symbols) if s is symbol], dtype=int)

    def to_text(self) -> str:
        return ",".join(s.value for s in self.symbols)

    @classmethod
    def from_text(cls, text: str, seed: Optional[int] = None) -> "NominalPattern":
        return cls(tuple(Symbol.parse(t) for t in text.split(",") if t.strip()), seed)


@dataclass(frozen=True)
class PulseTrainSpec:
    rep_rate: float
    pulse_width: float
    amplitude_levels: Mapping
    pattern_length: int
    sample_rate: float = config.SIM_SAMPLE_RATE
    rise_model: str = "ideal_square"

    def __post_init__(self):
        if self.rep_rate <= 0 or self.pulse_width <= 0:
            raise ValidationError("rep_rate and pulse_width must be positive")
        if self.pulse_width >= 1.0 / self.rep_rate:
            raise ValidationError(
                f"pulse width {self.pulse_width:g} s does not fit in a {1.0 / self.rep_rate:g} s slot"
            )
        if self.sample_rate < 10 * self.rep_rate:
            raise ValidationError(
                f"sample rate {self.sample_rate:g} Sa/s is below 10x the repetition rate"
            )
        if self.pattern_length < 1:
            raise ValidationError("pattern_length must be at least 1")
        if self.rise_model != "ideal_square":
            raise ValidationError(f"unsupported rise model '{self.rise_model}'")

    @property
    def slot_period(self) -> float:
        return 1.0 / self.rep_rate

    @property
    def n_samples(self) -> int:
        return int(round(self.pattern_length * self.sample_rate / self.rep_rate))


def _ordered_alphabet(alphabet: Iterable) -> tuple:
    symbols = [s if isinstance(s, Symbol) else Symbol.parse(s) for s in alphabet]
    if isinstance(alphabet, (set, frozenset)):
        order = list(Symbol)
        symbols.sort(key=order.index)
    return tuple(dict.fromkeys(symbols))


def random_pattern(
    seed: int,
    alphabet: Iterable,
    length: int,
    weights: Optional[Sequence[float]] = None,
) -> NominalPattern:
    """Draw `length` symbols i.i.d. from `alphabet` with a PCG64 generator seeded by `seed`."""
    symbols = _ordered_alphabet(alphabet)
    if not symbols:
        raise ValidationError("alphabet is empty")
    if length < 1:
        raise ValidationError(f"pattern length must be >= 1, got {length}")
    p = None
    if weights is not None:
        p = np.asarray(weights, dtype=float)
        if p.shape != (len(symbols),):
            raise ValidationError("one weight per alphabet symbol is required")
        if np.any(p < 0):
            raise ValidationError("weights must be non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValidationError(f"weights sum to {p.sum()!r}, expected 1")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(symbols), size=length, p=p)
    return NominalPattern(tuple(symbols[i] for i in idx), seed, symbols)


def random_spacing_pattern(seed: int, length: int, max_spacing: int = 7) -> NominalPattern:
    """ON/OFF pattern whose ON slots are separated by a uniform random 1..max_spacing slots."""
    if length < 1 or max_spacing < 1:
        raise ValidationError("length and max_spacing must be >= 1")
    rng = np.random.default_rng(seed)
    first = int(rng.integers(0, max_spacing))
    gaps = rng.integers(1, max_spacing + 1, size=length)
    on = first + np.concatenate(([0], np.cumsum(gaps)))
    on = on[on < length]
    symbols = [Symbol.OFF] * length
    for k in on:
        symbols[k] = Symbol.ON
    return NominalPattern(tuple(symbols), seed, SELECTION_ALPHABET)


def slot_pulse_bounds(slot: int, spec_rep_rate: float, pulse_width: float, sample_rate: float):
    """Half-open sample index range of the centred pulse in `slot`."""
    centre = (slot + 0.5) / spec_rep_rate
    start = math.ceil((centre - pulse_width / 2) * sample_rate - 1e-9)
    stop = math.ceil((centre + pulse_width / 2) * sample_rate - 1e-9)
    return start, stop


def make_pulse_train(spec: PulseTrainSpec, pattern: NominalPattern) -> Waveform:
    if len(pattern) != spec.pattern_length:
        raise ValidationError(
            f"pattern has {len(pattern)} symbols, the pulse train expects {spec.pattern_length}"
        )
    levels = dict(spec.amplitude_levels)
    samples = np.zeros(spec.n_samples)
    for k, symbol in enumerate(pattern):
        if symbol not in levels:
            raise ValidationError(f"no amplitude level for symbol {symbol.value}")
        level = levels[symbol]
        if level == 0.0:
            continue
        start, stop = slot_pulse_bounds(k, spec.rep_rate, spec.pulse_width, spec.sample_rate)
        samples[max(start, 0):min(stop, samples.size)] = level
    return Waveform(samples, spec.sample_rate, 0.0, "V/Vpi")


def resample(wf: Waveform, new_rate: float, tolerance: float = config.RATE_RATIO_TOLERANCE) -> Waveform:
    """Change the sample rate by a rational factor; pure decimation keeps every k-th sample."""
    if not new_rate > 0:
        raise ValidationError(f"new_rate must be positive, got {new_rate}")
    if new_rate == wf.sample_rate:
        return wf
    exact = new_rate / wf.sample_rate
    ratio = Fraction(exact).limit_denominator(1000)
    if abs(float(ratio) - exact) > tolerance * exact:
        raise ValidationError(
            f"rate ratio {exact!r} is not rational within tolerance {tolerance:g}"
        )
    if ratio.numerator == 1:
        samples = wf.samples[:: ratio.denominator]
    else:
        samples = resample_poly(wf.samples, ratio.numerator, ratio.denominator)
    return Waveform(samples, new_rate, wf.t0, wf.units)
