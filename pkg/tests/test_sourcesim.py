import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app import config, utils
from app.cli_commands.visibility import scan_grid, visibility_for
from app.errors import ValidationError
from app.linsys import ChainConfig, chain, design_bessel
from app.ingest import load_response
from app.phasemap import PulseGrid, extract_pulse_peaks
from app.sourcesim import (
    GainSwitchConfig,
    PulsePhaseSequence,
    StokesVector,
    angular_distance,
    drift_series,
    emulate_source_output,
    fringe_scan,
    gain_switched_phases,
    im_transmission,
    mzi_interfere,
    resistance_to_phase,
    select_paths,
)
from app.waveform import PATH_ALPHABET, PulseTrainSpec, SELECTION_LEVELS, Symbol, random_pattern

GRID = np.linspace(0.0, 2 * np.pi, 65)


def _phases(survival, n, seed=1, jitter=0.0):
    return gain_switched_phases(GainSwitchConfig(i_min=5.0, jitter_sigma=jitter, seed=seed, survival=survival), n)


# --- gain switching ---

def test_survival_probability_law():
    cfg = GainSwitchConfig(i_min=10.0)
    assert cfg.survival_probability == pytest.approx(math.exp(-1.0))
    assert GainSwitchConfig(i_min=2.0).survival_probability < cfg.survival_probability
    assert GainSwitchConfig(i_min=2.0, survival=0.3).survival_probability == 0.3


@pytest.mark.parametrize("kwargs", [
    {"i_min": 12.0},
    {"i_min": 5.0, "i_max": 11.0},
    {"i_min": 5.0, "i_scale": 0.0},
    {"i_min": 5.0, "jitter_sigma": -0.1},
    {"i_min": 5.0, "survival": 1.5},
])
def test_gain_switch_config_validation(kwargs):
    with pytest.raises(ValidationError):
        GainSwitchConfig(**kwargs)


def test_fresh_phases_are_uncorrelated():
    seq = _phases(0.0, 200_000)
    phi = seq.phases
    assert len(seq) == 200_000
    assert np.all((phi >= 0) & (phi < 2 * np.pi))
    link = np.mean(np.cos(phi[1:] - phi[:-1]))
    assert abs(link) < 5 / math.sqrt(2 * phi.size)


def test_full_survival_without_jitter_keeps_one_phase():
    phi = _phases(1.0, 1000).phases
    assert np.all(phi == phi[0])


def test_gain_switched_phases_are_seeded():
    np.testing.assert_array_equal(_phases(0.5, 100, seed=3).phases, _phases(0.5, 100, seed=3).phases)
    assert not np.array_equal(_phases(0.5, 100, seed=3).phases, _phases(0.5, 100, seed=4).phases)


def test_phase_sequence_range_is_checked():
    with pytest.raises(ValidationError):
        PulsePhaseSequence(np.array([0.0, 2 * np.pi]))


# --- interferometer ---

def test_mzi_reading_for_coherent_and_random_phases():
    same = np.zeros(100)
    assert mzi_interfere(same, 1.0, 0.0) == pytest.approx(1.0)
    assert mzi_interfere(same, 1.0, np.pi) == pytest.approx(0.0, abs=1e-15)
    random_phases = _phases(0.0, 200_000)
    assert mzi_interfere(random_phases, 1.0, 0.3) == pytest.approx(0.5, abs=0.01)


def test_mzi_needs_more_pulses_than_imbalance():
    with pytest.raises(ValidationError):
        mzi_interfere(np.zeros(2), 1.0, 0.0, imbalance_slots=2)


def test_coherent_pulses_give_full_visibility():
    result = fringe_scan(_phases(1.0, 10_000), 1.0, GRID)
    assert abs(result.visibility - 1.0) <= 1e-9
    assert result.i_min_obs == pytest.approx(0.0, abs=1e-12)


def test_random_phases_give_vanishing_visibility():
    result = fringe_scan(_phases(0.0, 10_000_000, seed=11), 1.0, GRID)
    assert 0.0 < result.visibility < 1e-3


def test_visibility_grows_with_survival():
    survivals = (0.0, 0.3, 0.7, 1.0)
    runs = np.array([
        [fringe_scan(_phases(p, 200_000, seed=seed), 1.0, GRID).visibility for seed in range(100, 108)]
        for p in survivals
    ])
    mean = runs.mean(axis=1)
    sem = runs.std(axis=1, ddof=1) / math.sqrt(runs.shape[1])
    for i in range(len(survivals) - 1):
        assert mean[i + 1] - mean[i] > 5 * math.hypot(sem[i], sem[i + 1])
    np.testing.assert_allclose(mean, survivals, atol=0.02)


def test_visibility_is_invariant_under_intensity_rescaling():
    phases = _phases(0.3, 50_000, seed=8)
    a = fringe_scan(phases, 1.0, GRID).visibility
    b = fringe_scan(phases, 3.0, GRID).visibility
    assert a == pytest.approx(b, rel=1e-12)


def test_reading_noise_gives_error_bars():
    phases = _phases(0.5, 100_000, seed=6)
    exact = fringe_scan(phases, 1.0, GRID)
    noisy = fringe_scan(phases, 1.0, GRID, readings_per_point=20, reading_noise=1e-4, seed=2)
    assert noisy.errors.shape == GRID.shape
    assert np.all(noisy.errors > 0)
    assert np.all(exact.errors == 0.0)
    assert noisy.visibility == pytest.approx(exact.visibility, abs=1e-3)
    assert exact.visibility == pytest.approx(0.5, abs=0.02)


@pytest.mark.parametrize("grid", [np.linspace(0, 2 * np.pi, 8), np.linspace(0, np.pi, 64)])
def test_fringe_grid_validation(grid):
    with pytest.raises(ValidationError):
        fringe_scan(_phases(1.0, 100), 1.0, grid)


def test_visibility_falls_with_minimum_current():
    source = utils.normalise_config({})["source"]
    values = [visibility_for(source, i_min, seed=17).visibility for i_min in config.I_MIN_SWEEP_MA]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[0] == pytest.approx(math.exp(-1.0), abs=0.02)


def test_thermistor_scan_covers_one_period():
    source = utils.normalise_config({})["source"]
    grid = scan_grid(source)
    assert grid.size == 64
    assert grid[0] == 0.0
    assert grid[-1] == pytest.approx(2 * np.pi)
    np.testing.assert_allclose(resistance_to_phase([10_000.0, 10_100.0], 10_000.0, 0.01), [0.0, 1.0])


# --- polarisation drift ---

def test_angular_distance_on_the_sphere():
    h = StokesVector(1.0, 0.0, 0.0)
    d = StokesVector(0.0, 1.0, 0.0)
    v = StokesVector(-1.0, 0.0, 0.0)
    assert angular_distance(h, h) == 0.0
    assert angular_distance(h, d) == pytest.approx(np.pi / 2)
    assert angular_distance(h, v) == pytest.approx(np.pi)


def test_stokes_vector_must_be_unit():
    with pytest.raises(ValidationError):
        StokesVector(0.5, 0.0, 0.0)
    assert StokesVector.normalized(2.0, 0.0, 0.0).s1 == 1.0


def test_drift_series_against_first_state():
    angles = np.linspace(0.0, 0.01, 121)
    log = [(60.0 * k, StokesVector(math.cos(a), math.sin(a), 0.0)) for k, a in enumerate(angles)]
    series = drift_series(log, label="lab")
    assert series.times[-1] == 7200.0
    np.testing.assert_allclose(series.angles, angles, atol=1e-12)
    assert series.max_angle == pytest.approx(0.01)
    assert series.within_limit
    assert not drift_series(log, limit_rad=0.005).within_limit
    with pytest.raises(ValidationError):
        drift_series([])


# --- path selection ---

def test_select_paths_partitions_the_slots():
    pattern = random_pattern(9, PATH_ALPHABET, 3000)
    selection = select_paths(pattern)
    on = np.array([[s is Symbol.ON for s in selection.patterns[p]] for p in PATH_ALPHABET])
    assert np.all(on.sum(axis=0) == 1)
    sigma = math.sqrt(3000 * (1 / 3) * (2 / 3))
    for count in selection.on_counts.values():
        assert abs(count - 1000) < 5 * sigma
    assert selection.gains == {p: 1.0 for p in PATH_ALPHABET}


def test_select_paths_rejects_other_symbols():
    with pytest.raises(ValidationError):
        select_paths(random_pattern(1, [Symbol.ON, Symbol.OFF], 10))


def test_im_stable_points():
    np.testing.assert_allclose(im_transmission([0.0, 0.5, 1.0]), [0.0, 0.5, 1.0], atol=1e-15)
    # flat at the stable point
    assert 1.0 - im_transmission(0.99) < 3e-4


def test_path_selection_output_is_uniform():
    electrical = chain([
        design_bessel(4, config.AWG_CUTOFF_HZ, "awg"),
        load_response(config.AMPLIFIER_TABLE, "measured"),
        load_response(config.MODULATOR_TABLE, "ideal_linear"),
    ])
    scope = ChainConfig((design_bessel(4, config.SCOPE_CUTOFF_HZ, "scope"),), config.SCOPE_SAMPLE_RATE)
    pattern = random_pattern(31, PATH_ALPHABET, 100)
    spec = PulseTrainSpec(1e9, 200e-12, SELECTION_LEVELS, 100)
    trace = emulate_source_output(pattern, select_paths(pattern), spec, electrical, scope)
    assert len(trace) == 4000
    peaks = np.array([r.peak_intensity for r in extract_pulse_peaks(trace, PulseGrid(1e9, 0.0), pattern)[1:]])
    assert peaks.size == 99
    assert np.std(peaks) / np.mean(peaks) < 5e-3
