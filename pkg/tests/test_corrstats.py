import math
import os
import random
import sys
import warnings

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app.corrstats import (
    CUR_SYMBOLS,
    PREV_SYMBOLS,
    CaseKey,
    CaseStats,
    aggregate_trials,
    average_traces,
    correlation_report,
    distinguishability,
    distinguishability_table,
    intensity_by_spacing,
    lag_regression,
    max_distinguishability,
    peak_stats_by_group,
    phase_case_stats,
    phase_deviation,
)
from app.errors import DataQualityWarning, ValidationError
from app.phasemap import PulseRecord
from app.waveform import PHASE_ALPHABET, Symbol, Waveform, random_pattern, random_spacing_pattern

FS = 40e9


def _records(symbols, phis=None, trace_index=0):
    phis = [s.phase for s in symbols] if phis is None else phis
    return [PulseRecord(k, s, phi=float(p), trace_index=trace_index) for k, (s, p) in enumerate(zip(symbols, phis))]


def _oracle(batch, n_max):
    """Direct O(N^2) enumeration of every ordered record pair within a trace."""
    out = {}
    for records in batch:
        for prev in records:
            for cur in records:
                n = cur.slot_index - prev.slot_index
                if 1 <= n <= n_max and prev.nominal in PREV_SYMBOLS and cur.nominal in CUR_SYMBOLS:
                    out.setdefault(CaseKey(n, prev.nominal, cur.nominal), []).append(cur.phi)
    return out


def _noisy_batch(seed):
    rng = np.random.default_rng(seed)
    batch = []
    for t in range(2):
        length = int(rng.integers(5, 26))
        symbols = random_pattern(seed * 10 + t, PHASE_ALPHABET, length).symbols
        phis = [s.phase + rng.normal(0, 0.05) for s in symbols]
        batch.append(_records(symbols, phis, t))
    return batch


# --- phase_case_stats ---

def test_ideal_records_give_nominal_means_and_zero_std():
    symbols = random_pattern(1, PHASE_ALPHABET, 300).symbols
    stats = phase_case_stats([_records(symbols)], 8)
    assert len(stats) == 8 * 6
    for s in stats:
        assert s.count > 0
        assert s.mean_phi == s.key.cur_nominal.phase
        assert s.std_phi == 0.0


@pytest.mark.parametrize("seed", range(100))
def test_case_stats_match_brute_force_oracle(seed):
    batch = _noisy_batch(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        stats = phase_case_stats(batch, 4)
    oracle = _oracle(batch, 4)
    for s in stats:
        values = oracle.get(s.key, [])
        assert s.count == len(values)
        if values:
            assert s.mean_phi == math.fsum(values) / len(values)
        if len(values) > 1:
            assert s.std_phi == pytest.approx(np.std(values, ddof=1), rel=1e-9, abs=1e-15)


def test_pairs_never_cross_trace_boundaries():
    a = _records([Symbol.S_PI])
    b = _records([Symbol.S_PI], trace_index=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        stats = phase_case_stats([a, b], 1)
    assert all(s.count == 0 for s in stats)


def test_empty_case_is_flagged():
    with pytest.warns(DataQualityWarning, match="no occurrences"):
        stats = phase_case_stats([_records([Symbol.S0, Symbol.S_PI])], 1)
    counts = {s.key.label: s.count for s in stats}
    assert counts["S0->S_pi"] == 1
    assert counts["S_pi->S_pi"] == 0


def test_case_counts_follow_binomial_expectation():
    n = 15_000
    symbols = random_pattern(2024, PHASE_ALPHABET, n).symbols
    stats = phase_case_stats([_records(symbols)], 8)
    expected = n / 9
    sigma = math.sqrt(n * (1 / 9) * (8 / 9))
    for s in stats:
        assert abs(s.count - expected) < 5 * sigma


def test_statistics_ignore_record_order():
    rng = np.random.default_rng(7)
    batch = []
    for t in range(2):
        symbols = random_pattern(700 + t, PHASE_ALPHABET, 200).symbols
        batch.append(_records(symbols, [s.phase + rng.normal(0, 0.05) for s in symbols], t))
    shuffled = []
    rnd = random.Random(3)
    for records in reversed(batch):
        copy = list(records)
        rnd.shuffle(copy)
        shuffled.append(copy)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        assert phase_case_stats(batch, 3) == phase_case_stats(shuffled, 3)


def test_records_without_phase_are_rejected():
    records = [PulseRecord(0, Symbol.S0, phi=0.0), PulseRecord(1, Symbol.S_PI)]
    with pytest.raises(ValidationError):
        phase_case_stats([records], 1)


# --- phase_deviation ---

def _stats_n1(means):
    return [
        CaseStats(CaseKey(1, p, c), means.get((p, c), c.phase), 0.0, 10)
        for p in PREV_SYMBOLS for c in CUR_SYMBOLS
    ]


def test_deviation_against_zero_baseline():
    eps = 0.01
    deviation, max_per_n = phase_deviation(_stats_n1({(Symbol.S_PI, Symbol.S_PI): math.pi + eps}))
    assert deviation[CaseKey(1, Symbol.S_PI, Symbol.S_PI)] == pytest.approx(eps)
    assert deviation[CaseKey(1, Symbol.S0, Symbol.S_PI)] == 0.0
    assert max_per_n == {1: pytest.approx(eps)}


def test_max_deviation_uses_absolute_value():
    deviation, max_per_n = phase_deviation(_stats_n1({(Symbol.S_HALF, Symbol.S_HALF): math.pi / 2 - 0.02}))
    assert deviation[CaseKey(1, Symbol.S_HALF, Symbol.S_HALF)] == pytest.approx(-0.02)
    assert max_per_n[1] == pytest.approx(0.02)


def test_ideal_input_has_zero_deviation_everywhere():
    symbols = random_pattern(5, PHASE_ALPHABET, 500).symbols
    deviation, max_per_n = phase_deviation(phase_case_stats([_records(symbols)], 8))
    assert all(v == 0.0 for v in deviation.values())
    assert all(v == 0.0 for v in max_per_n.values())


def test_missing_baseline_is_an_error():
    stats = [s if s.key.prev_nominal is not Symbol.S0 or s.key.cur_nominal is not Symbol.S_PI
             else CaseStats(s.key, math.nan, math.nan, 0) for s in _stats_n1({})]
    with pytest.raises(ValidationError, match="baseline"):
        phase_deviation(stats)


def test_aggregate_trials_mean_and_sample_std():
    mean, std = aggregate_trials([{1: 0.1, 2: 0.2}, {1: 0.3, 2: 0.2}])
    assert mean == {1: pytest.approx(0.2), 2: 0.2}
    assert std[1] == pytest.approx(math.sqrt(0.02))
    assert std[2] == 0.0
    with pytest.raises(ValidationError):
        aggregate_trials([])


def test_correlation_report_over_trials():
    trials = []
    for t in range(3):
        symbols = random_pattern(100 + t, PHASE_ALPHABET, 400).symbols
        trials.append([_records(symbols)])
    report = correlation_report(trials, 4, rep_rate_hz=1e9)
    assert report.n_trials == 3
    assert sorted(report.max_deviation_per_n) == [1, 2, 3, 4]
    assert all(v == 0.0 for v in report.max_deviation_std_per_n.values())
    assert len(report.per_case) == 24
    assert not report.is_empty


# --- lag_regression ---

def _isi_records(seed, length, weights, noise=0.0):
    """Records whose phi carries an exact additive contribution of the symbol at each past lag."""
    rng = np.random.default_rng(seed)
    symbols = random_pattern(seed, PHASE_ALPHABET, length).symbols
    phis = []
    for k, s in enumerate(symbols):
        phi = s.phase + rng.normal(0, noise) if noise else s.phase
        for n, (w_half, w_pi) in weights.items():
            if k - n >= 0:
                phi += {Symbol.S0: 0.0, Symbol.S_HALF: w_half, Symbol.S_PI: w_pi}[symbols[k - n]]
        phis.append(phi)
    return _records(symbols, phis)


ISI = {1: (0.010, 0.020), 2: (-0.004, 0.008), 3: (0.001, 0.003), 5: (0.0005, -0.002)}


def test_regression_recovers_each_lag_exactly():
    batch = [_isi_records(s, 400, ISI) for s in (1, 2, 3)]
    deviation, max_per_n = lag_regression(batch, 5, fit_lags=8)
    assert deviation[CaseKey(1, Symbol.S_PI, Symbol.S_HALF)] == pytest.approx(0.020, abs=1e-9)
    assert deviation[CaseKey(2, Symbol.S_HALF, Symbol.S_PI)] == pytest.approx(-0.004, abs=1e-9)
    assert deviation[CaseKey(3, Symbol.S0, Symbol.S_PI)] == 0.0
    expected = {1: 0.020, 2: 0.008, 3: 0.003, 4: 0.0, 5: 0.002}
    assert max_per_n == pytest.approx(expected, abs=1e-9)


def test_regression_beats_case_means_at_deep_lags():
    batch = [_isi_records(s, 300, ISI, noise=0.0005) for s in range(10, 20)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        case_curve = phase_deviation(phase_case_stats(batch, 5))[1]
    fit_curve = lag_regression(batch, 5, fit_lags=8)[1]
    # lag 4 carries nothing; case means pick up the other lags as noise
    assert fit_curve[4] < 5e-4
    assert case_curve[4] > fit_curve[4]
    assert fit_curve[1] == pytest.approx(0.020, abs=5e-4)


def test_regression_needs_enough_pulses_and_cover():
    batch = [_isi_records(4, 30, ISI)]
    with pytest.raises(ValidationError, match="complete"):
        lag_regression(batch, 3, fit_lags=12)
    with pytest.raises(ValidationError, match="cover"):
        lag_regression(batch, 5, fit_lags=3)


def test_report_with_regression_estimator():
    trials = [[_isi_records(50 + t, 500, ISI)] for t in range(2)]
    report = correlation_report(trials, 4, rep_rate_hz=1e9, estimator="regression", fit_lags=8)
    assert report.estimator == "regression"
    assert report.max_deviation_per_n[2] == pytest.approx(0.008, abs=1e-9)
    assert report.max_deviation_std_per_n[2] == pytest.approx(0.0, abs=1e-9)
    assert len(report.per_case) == 24
    with pytest.raises(ValidationError, match="estimator"):
        correlation_report(trials, 4, estimator="median")


# --- intensity_by_spacing ---

def _peak_records(spacings, peaks):
    return [PulseRecord(k, Symbol.ON, peak_intensity=p, spacing_prev_ns=l)
            for k, (l, p) in enumerate(zip(spacings, peaks))]


def test_identical_pulses_normalise_to_one():
    spacings = [None] + [l for l in range(1, 8) for _ in range(5)]
    table = intensity_by_spacing([_peak_records(spacings, [0.8] * len(spacings))], 7)
    assert sorted(table) == list(range(1, 8))
    for s in table.values():
        assert s.normalized_mean == 1.0
        assert s.std == 0.0
        assert s.count == 5


def test_dimmer_short_spacing_pulses():
    spacings = [None] + [l for l in range(1, 8) for _ in range(4)]
    peaks = [1.0] + [0.996 if l == 1 else 1.0 for l in spacings[1:]]
    table = intensity_by_spacing([_peak_records(spacings, peaks)], 7)
    assert table[1].normalized_mean == pytest.approx(0.996)
    assert max(s.normalized_mean for s in table.values()) == 1.0


def test_empty_spacing_bucket_is_flagged():
    with pytest.warns(DataQualityWarning, match="l=3"):
        table = intensity_by_spacing([_peak_records([None, 1, 2], [1.0, 1.0, 1.0])], 3)
    assert table[3].count == 0


def test_spacing_counts_of_a_random_selection_run():
    pattern = random_spacing_pattern(77, 10_000, 7)
    on = pattern.indices_of(Symbol.ON)
    spacings = [None] + [int(d) for d in np.diff(on)]
    table = intensity_by_spacing([_peak_records(spacings, [1.0] * len(spacings))], 7)
    total = len(on) - 1
    assert 2300 < total < 2700
    sigma = math.sqrt(total * (1 / 7) * (6 / 7))
    for s in table.values():
        assert abs(s.count - total / 7) < 5 * sigma


@pytest.mark.parametrize("seed", range(100))
def test_deviation_matches_brute_force_oracle(seed):
    batch = _noisy_batch(seed)
    oracle = _oracle(batch, 4)
    means = {k: math.fsum(v) / len(v) for k, v in oracle.items()}
    complete = all(CaseKey(n, Symbol.S0, c) in means for n in range(1, 5) for c in CUR_SYMBOLS)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        stats = phase_case_stats(batch, 4)
    if not complete:
        with pytest.raises(ValidationError, match="baseline"):
            phase_deviation(stats)
        return
    deviation, max_per_n = phase_deviation(stats)
    expected_max = {}
    for n in range(1, 5):
        for p in PREV_SYMBOLS:
            for c in CUR_SYMBOLS:
                key = CaseKey(n, p, c)
                if key not in means:
                    assert math.isnan(deviation[key])
                    continue
                expected = 0.0 if p is Symbol.S0 else means[key] - means[CaseKey(n, Symbol.S0, c)]
                assert deviation[key] == pytest.approx(expected, rel=1e-12, abs=1e-15)
                expected_max[n] = max(expected_max.get(n, 0.0), abs(expected))
    assert max_per_n == pytest.approx(expected_max, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("seed", range(100))
def test_spacing_table_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(seed)
    batch = []
    for _ in range(2):
        length = int(rng.integers(3, 30))
        spacings = [None] + [int(l) for l in rng.integers(1, 10, size=length - 1)]
        batch.append(_peak_records(spacings, rng.uniform(0.9, 1.0, size=length)))
    values = {}
    for records in batch:
        for r in records:
            if r.spacing_prev_ns is not None and r.spacing_prev_ns <= 7:
                values.setdefault(r.spacing_prev_ns, []).append(r.peak_intensity)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        if not values:
            with pytest.raises(ValidationError):
                intensity_by_spacing(batch, 7)
            return
        table = intensity_by_spacing(batch, 7)
    top = max(math.fsum(v) / len(v) for v in values.values())
    for l in range(1, 8):
        s = table[l]
        assert s.count == len(values.get(l, []))
        if l not in values:
            assert math.isnan(s.mean)
            continue
        mean = math.fsum(values[l]) / len(values[l])
        assert s.mean == pytest.approx(mean, rel=1e-12)
        assert s.normalized_mean == pytest.approx(mean / top, rel=1e-12)
        if len(values[l]) > 1:
            assert s.std == pytest.approx(np.std(values[l], ddof=1), rel=1e-9, abs=1e-15)


# --- averaging and distinguishability ---

def test_average_traces():
    x = Waveform(np.sin(np.linspace(0, 3, 40)), FS)
    np.testing.assert_allclose(average_traces([x, x, x]).samples, x.samples)
    assert np.all(average_traces([x, x.scaled(-1)]).samples == 0.0)
    with pytest.raises(ValidationError):
        average_traces([x, Waveform(np.ones(39), FS)])


def test_averaging_reduces_noise_by_sqrt_n():
    rng = np.random.default_rng(9)
    clean = np.exp(-np.linspace(-3, 3, 2000) ** 2)
    sigma = 0.05
    group = [Waveform(clean + rng.normal(0, sigma, clean.size), FS) for _ in range(100)]
    rms = np.sqrt(np.mean((average_traces(group).samples - clean) ** 2))
    assert 0.8 * sigma / 10 < rms < 1.2 * sigma / 10


def test_distinguishability_basic_properties():
    rng = np.random.default_rng(1)
    a = Waveform(rng.normal(size=64), FS)
    b = Waveform(rng.normal(size=64), FS)
    assert distinguishability(a, a) == pytest.approx(0.0, abs=1e-12)
    assert distinguishability(a, a.scaled(2.0)) == pytest.approx(0.0, abs=1e-12)
    assert distinguishability(a, b) == distinguishability(b, a)
    assert distinguishability(a.scaled(3.0), b.scaled(3.0)) == pytest.approx(distinguishability(a, b))
    assert 0.0 <= distinguishability(a, b) <= 2.0
    e1 = Waveform([1.0, 0.0], FS)
    e2 = Waveform([0.0, 1.0], FS)
    assert distinguishability(e1, e2) == 1.0


def test_distinguishability_rejects_bad_input():
    with pytest.raises(ValidationError):
        distinguishability(Waveform(np.zeros(4), FS), Waveform(np.ones(4), FS))
    with pytest.raises(ValidationError):
        distinguishability(Waveform(np.ones(4), FS), Waveform(np.ones(5), FS))


def _pair_with_epsilon(eps, seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1e-9, 40, endpoint=False)
    a = np.exp(-((t - 0.5e-9) / 60e-12) ** 2)
    u = rng.normal(size=a.size)
    u -= np.dot(u, a) / np.dot(a, a) * a
    u *= np.linalg.norm(a) / np.linalg.norm(u)
    c = math.sqrt(1.0 / (1.0 - eps) ** 2 - 1.0)
    return Waveform(a, FS), Waveform(a + c * u, FS)


@pytest.mark.parametrize("eps", [5.330e-6, 2.396e-7, 5.834e-6])
def test_distinguishability_reproduces_small_epsilons(eps):
    a, b = _pair_with_epsilon(eps, seed=int(eps * 1e10))
    assert float(f"{distinguishability(a, b):.3e}") == eps


def test_distinguishability_table_and_maxima():
    p1, p2 = _pair_with_epsilon(5.330e-6, 1)
    _, p3 = _pair_with_epsilon(2.396e-7, 2)
    pairs = distinguishability_table({"P2": [p2, p2], "P1": [p1], "P3": [p3]})
    assert list(pairs) == [("P1", "P2"), ("P1", "P3"), ("P2", "P3")]
    assert pairs[("P1", "P2")] == pytest.approx(5.330e-6, rel=1e-3)
    best = max_distinguishability(pairs)
    assert list(best) == ["P1", "P2", "P3"]
    assert best["P1"] == max(pairs[("P1", "P2")], pairs[("P1", "P3")])


def test_peak_stats_by_group():
    records = {
        "P1": [PulseRecord(0, Symbol.P1, peak_intensity=1.0, peak_time_offset=500e-12),
               PulseRecord(3, Symbol.P1, peak_intensity=0.9, peak_time_offset=510e-12)],
        "P2": [PulseRecord(1, Symbol.P2, peak_intensity=0.8, peak_time_offset=505e-12)],
    }
    summary = peak_stats_by_group(records)
    assert [s.group for s in summary] == ["P1", "P2"]
    assert summary[0].mean_peak == pytest.approx(0.95)
    assert summary[0].std_time == pytest.approx(np.std([500e-12, 510e-12], ddof=1))
    assert summary[1].count == 1
    assert summary[1].std_peak == 0.0
