# app/corrstats.py
"""
Correlation and distinguishability statistics over extracted pulse records.

Record batches are sequences of per-trace record sequences; pairs never cross
a trace boundary. Standard deviations use the N-1 denominator.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.errors import DataQualityWarning, ValidationError
from app.phasemap import PulseRecord
from app.waveform import Symbol, Waveform

PREV_SYMBOLS = (Symbol.S0, Symbol.S_HALF, Symbol.S_PI)
CUR_SYMBOLS = (Symbol.S_HALF, Symbol.S_PI)
ESTIMATORS = ("case_mean", "regression")
_CODES = {Symbol.S0: 0, Symbol.S_HALF: 1, Symbol.S_PI: 2}


@dataclass(frozen=True, order=True)
class CaseKey:
    lag_n: int
    prev_nominal: Symbol
    cur_nominal: Symbol

    @property
    def label(self) -> str:
        return f"{self.prev_nominal.value}->{self.cur_nominal.value}"


@dataclass(frozen=True)
class CaseStats:
    key: CaseKey
    mean_phi: float
    std_phi: float
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0


@dataclass(frozen=True)
class SpacingStats:
    spacing_ns: int
    mean: float
    std: float
    normalized_mean: float
    normalized_std: float
    count: int


@dataclass
class CorrelationReport:
    rep_rate_hz: float = 0.0
    per_case: List[CaseStats] = field(default_factory=list)
    deviation: Dict[CaseKey, float] = field(default_factory=dict)
    max_deviation_per_n: Dict[int, float] = field(default_factory=dict)
    max_deviation_std_per_n: Dict[int, float] = field(default_factory=dict)
    n_trials: int = 1
    intensity_by_spacing: Dict[int, SpacingStats] = field(default_factory=dict)
    epsilon_pairs: Dict[Tuple[str, str], float] = field(default_factory=dict)
    peak_stats: List[PeakSummary] = field(default_factory=list)
    estimator: str = "case_mean"

    @property
    def is_empty(self) -> bool:
        return not (self.per_case or self.max_deviation_per_n
                    or self.intensity_by_spacing or self.epsilon_pairs or self.peak_stats)


def _sort_key(symbol: Symbol) -> int:
    return list(Symbol).index(symbol)


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    # fsum keeps results independent of record order
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    if min(values) == max(values):
        return float(values[0]), 0.0
    mean = math.fsum(values) / n
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def phase_case_stats(batch: Sequence[Sequence[PulseRecord]], n_max: int) -> List[CaseStats]:
    """Mean and std of phi for every (lag n, previous nominal, current nominal) case."""
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    buckets: Dict[CaseKey, List[float]] = {
        CaseKey(n, p, c): [] for n in range(1, n_max + 1) for p in PREV_SYMBOLS for c in CUR_SYMBOLS
    }
    for records in batch:
        ordered = sorted(records, key=lambda r: r.slot_index)
        by_slot = {r.slot_index: r for r in ordered}
        for cur in ordered:
            if cur.nominal not in CUR_SYMBOLS:
                continue
            if cur.phi is None:
                raise ValidationError(f"record at slot {cur.slot_index} has no phase")
            for n in range(1, n_max + 1):
                prev = by_slot.get(cur.slot_index - n)
                if prev is None or prev.nominal not in PREV_SYMBOLS:
                    continue
                buckets[CaseKey(n, prev.nominal, cur.nominal)].append(cur.phi)
    stats = []
    for key in sorted(buckets, key=lambda k: (k.lag_n, _sort_key(k.prev_nominal), _sort_key(k.cur_nominal))):
        values = buckets[key]
        if not values:
            warnings.warn(f"case n={key.lag_n} {key.label} has no occurrences", DataQualityWarning)
        mean, std = _mean_std(values)
        stats.append(CaseStats(key, mean, std, len(values)))
    return stats


def phase_deviation(stats: Sequence[CaseStats]) -> Tuple[Dict[CaseKey, float], Dict[int, float]]:
    """Signed deviation from the prev=0 baseline per case, and the max |deviation| per lag."""
    by_key = {s.key: s for s in stats}
    deviation: Dict[CaseKey, float] = {}
    for key, s in by_key.items():
        baseline = by_key.get(CaseKey(key.lag_n, Symbol.S0, key.cur_nominal))
        if baseline is None or baseline.count < 1:
            raise ValidationError(
                f"missing baseline case n={key.lag_n} S0->{key.cur_nominal.value}"
            )
        if key.prev_nominal is Symbol.S0:
            deviation[key] = 0.0
        else:
            deviation[key] = s.mean_phi - baseline.mean_phi if s.count else math.nan
    max_per_n: Dict[int, float] = {}
    for n in sorted({k.lag_n for k in deviation}):
        values = [abs(v) for k, v in deviation.items() if k.lag_n == n and not math.isnan(v)]
        max_per_n[n] = max(values)
    return deviation, max_per_n


def _lag_design(records: Sequence[PulseRecord], fit_lags: int) -> Tuple[np.ndarray, np.ndarray]:
    """Design rows and targets of one trace: every slot whose +-fit_lags neighbourhood is complete."""
    ordered = sorted(records, key=lambda r: r.slot_index)
    width = 2 * fit_lags + 1
    if not ordered or ordered[-1].slot_index + 1 < width:
        return np.empty((0, 2 + 4 * fit_lags)), np.empty(0)
    codes = np.full(ordered[-1].slot_index + 1, -1)
    phi = np.full(codes.size, np.nan)
    for r in ordered:
        codes[r.slot_index] = _CODES.get(r.nominal, -1)
        if r.phi is not None:
            phi[r.slot_index] = r.phi
    windows = np.lib.stride_tricks.sliding_window_view(codes, width)
    centre = windows[:, fit_lags]
    target = phi[fit_lags:codes.size - fit_lags]
    keep = (windows >= 0).all(axis=1) & (centre > 0) & ~np.isnan(target)
    windows, centre, target = windows[keep], centre[keep], target[keep]
    # columns: intercept per current nominal, then (S_half, S_pi) indicators per neighbour position
    others = np.delete(windows, fit_lags, axis=1)
    indicators = np.stack([others == 1, others == 2], axis=2).reshape(len(windows), -1)
    intercepts = np.column_stack([centre == 1, centre == 2])
    return np.column_stack([intercepts, indicators]).astype(float), target


def lag_regression(
    batch: Sequence[Sequence[PulseRecord]],
    n_max: int,
    fit_lags: int = 16,
) -> Tuple[Dict[CaseKey, float], Dict[int, float]]:
    """
    Deviation per case from a joint least-squares fit of phi on the nominal at every
    lag in -fit_lags..fit_lags (S0 as reference level, one intercept per current nominal).

    The fitted coefficient of a previous nominal at lag n is its deviation from the
    prev=S0 baseline with the other lags held fixed, so random symbols elsewhere do
    not leak into it. Same return shape as `phase_deviation`.
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    if fit_lags < n_max:
        raise ValidationError(f"fit_lags ({fit_lags}) must cover n_max ({n_max})")
    parts = [_lag_design(records, fit_lags) for records in batch]
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    if len(y) <= x.shape[1]:
        raise ValidationError(
            f"{len(y)} pulses with a complete +-{fit_lags} slot neighbourhood; need more than {x.shape[1]}"
        )
    coeffs, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        raise ValidationError("lag regression is rank deficient; patterns do not vary enough")

    def coefficient(n: int, symbol: Symbol) -> float:
        # lag n sits at neighbour position fit_lags - n, before the removed centre
        position = fit_lags - n
        return float(coeffs[2 + 2 * position + _CODES[symbol] - 1])

    deviation: Dict[CaseKey, float] = {}
    max_per_n: Dict[int, float] = {}
    for n in range(1, n_max + 1):
        for prev in PREV_SYMBOLS:
            value = 0.0 if prev is Symbol.S0 else coefficient(n, prev)
            for cur in CUR_SYMBOLS:
                deviation[CaseKey(n, prev, cur)] = value
        max_per_n[n] = max(abs(coefficient(n, s)) for s in (Symbol.S_HALF, Symbol.S_PI))
    return deviation, max_per_n


def aggregate_trials(curves: Sequence[Mapping[int, float]]) -> Tuple[Dict[int, float], Dict[int, float]]:
    """Mean and sample std across trial-level max-deviation curves (std 0 for a single trial)."""
    if not curves:
        raise ValidationError("no trial curves to aggregate")
    lags = sorted(set.intersection(*(set(c) for c in curves)))
    mean, std = {}, {}
    for n in lags:
        mean[n], std[n] = _mean_std([c[n] for c in curves])
    return mean, std


def correlation_report(
    trials: Sequence[Sequence[Sequence[PulseRecord]]],
    n_max: int,
    rep_rate_hz: float = 0.0,
    estimator: str = "case_mean",
    fit_lags: int = 16,
) -> CorrelationReport:
    """
    Per-case table over all trials pooled, plus the trial-averaged max-deviation curve.
    The curve comes from the case means or from `lag_regression`, per `estimator`.
    """
    if estimator not in ESTIMATORS:
        raise ValidationError(f"estimator must be one of {ESTIMATORS}, got '{estimator}'")

    def curve(batch):
        if estimator == "regression":
            return lag_regression(batch, n_max, fit_lags)[1]
        return phase_deviation(phase_case_stats(batch, n_max))[1]

    pooled = [records for trial in trials for records in trial]
    stats = phase_case_stats(pooled, n_max)
    deviation, max_per_n = phase_deviation(stats)
    if estimator == "regression":
        max_per_n = curve(pooled)
    std_per_n = {n: 0.0 for n in max_per_n}
    if len(trials) > 1:
        max_per_n, std_per_n = aggregate_trials([curve(trial) for trial in trials])
    return CorrelationReport(rep_rate_hz, stats, deviation, max_per_n, std_per_n, len(trials), estimator=estimator)


def intensity_by_spacing(batch: Sequence[Sequence[PulseRecord]], l_max: int) -> Dict[int, SpacingStats]:
    """Peak intensity statistics grouped by distance (ns) to the preceding pulse."""
    if l_max < 1:
        raise ValidationError("l_max must be >= 1")
    buckets: Dict[int, List[float]] = {l: [] for l in range(1, l_max + 1)}
    for records in batch:
        for r in records:
            if r.spacing_prev_ns is None or r.spacing_prev_ns not in buckets:
                continue
            if r.peak_intensity is None:
                raise ValidationError(f"record at slot {r.slot_index} has no peak intensity")
            buckets[r.spacing_prev_ns].append(r.peak_intensity)
    raw = {}
    for l, values in buckets.items():
        if not values:
            warnings.warn(f"no pulses with spacing l={l} ns", DataQualityWarning)
        raw[l] = (*_mean_std(values), len(values))
    means = [m for m, _, c in raw.values() if c]
    if not means:
        raise ValidationError("no pulses with a preceding pulse within l_max")
    top = max(means)
    return {
        l: SpacingStats(l, m, s, m / top, s / top, c) for l, (m, s, c) in raw.items()
    }


def average_traces(group: Sequence[Waveform]) -> Waveform:
    if not group:
        raise ValidationError("cannot average an empty group")
    first = group[0]
    for wf in group[1:]:
        if len(wf) != len(first) or wf.sample_rate != first.sample_rate:
            raise ValidationError("traces differ in length or sample rate")
    stacked = np.stack([wf.samples for wf in group])
    return first.with_samples(stacked.mean(axis=0))


def distinguishability(a: Waveform, b: Waveform) -> float:
    """epsilon = 1 - <a, b> / (|a| |b|)."""
    if len(a) != len(b):
        raise ValidationError("traces differ in length")
    na, nb = np.linalg.norm(a.samples), np.linalg.norm(b.samples)
    if na == 0 or nb == 0:
        raise ValidationError("zero-norm trace")
    cosine = float(np.dot(a.samples, b.samples) / (na * nb))
    return 1.0 - min(1.0, max(-1.0, cosine))


def distinguishability_table(groups: Mapping[str, Sequence[Waveform]]) -> Dict[Tuple[str, str], float]:
    """Pairwise epsilon between the averaged traces of each group (keys in sorted order)."""
    averaged = {label: average_traces(traces) for label, traces in sorted(groups.items())}
    return {
        (a, b): distinguishability(averaged[a], averaged[b])
        for a, b in itertools.combinations(averaged, 2)
    }


def max_distinguishability(pairs: Mapping[Tuple[str, str], float]) -> Dict[str, float]:
    """Per group, the largest epsilon against any other group."""
    out: Dict[str, float] = {}
    for (a, b), eps in pairs.items():
        out[a] = max(out.get(a, 0.0), eps)
        out[b] = max(out.get(b, 0.0), eps)
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class PeakSummary:
    group: str
    mean_peak: float
    std_peak: float
    mean_time: float
    std_time: float
    count: int


def peak_stats_by_group(grouped: Mapping[str, Sequence[PulseRecord]]) -> List[PeakSummary]:
    out = []
    for label, records in sorted(grouped.items()):
        peaks = [r.peak_intensity for r in records if r.peak_intensity is not None]
        times = [r.peak_time_offset for r in records if r.peak_time_offset is not None]
        mp, sp = _mean_std(peaks)
        mt, st = _mean_std(times)
        out.append(PeakSummary(label, mp, sp, mt, st, len(peaks)))
    return out
