# app/cli_commands/analyze_phase.py
import warnings
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import typer

from app import config, utils
from app.cli_commands.options import ConfigOption, OutOption, OverrideOption, QuietOption
from app.corrstats import CorrelationReport, correlation_report
from app.errors import DataQualityWarning, ValidationError
from app.ingest import TraceFile, find_trace_files, group_traces, load_run_config, write_report
from app.phasemap import (
    ZERO_LEVEL_SYMBOLS,
    PulseGrid,
    PulseRecord,
    align_to_pattern,
    amplitude_to_phase,
    estimate_dc_offset,
    extract_pulse_phases,
    intensity_to_phase,
    normalization_context,
    normalize_traces,
)


def require_patterns(trial: Sequence[TraceFile]):
    patterns = []
    for tf in trial:
        if tf.pattern is None:
            raise ValidationError(f"{tf.source}: missing pattern metadata")
        patterns.append(tf.pattern)
    return patterns


def aligned_grids(trial: Sequence[TraceFile], patterns, grid: PulseGrid, min_confidence: float) -> List[PulseGrid]:
    return [
        replace(grid, alignment_offset=align_to_pattern(tf.waveform, p, grid, min_confidence))
        for tf, p in zip(trial, patterns)
    ]


def resolve_dc_offset(trial, patterns, grids, dc_offset) -> float:
    if dc_offset != "auto":
        return float(dc_offset)
    # path patterns have no dark slot to measure a baseline in
    usable = [(tf, p, g) for tf, p, g in zip(trial, patterns, grids)
              if any(s in ZERO_LEVEL_SYMBOLS for s in p)]
    if not usable:
        return 0.0
    return float(np.mean([estimate_dc_offset([tf.waveform], [p], g) for tf, p, g in usable]))


def trial_phase_records(trial: Sequence[TraceFile], rep_rate: float, analysis: dict,
                        pulse_width: float = config.DEFAULT_PULSE_WIDTH) -> List[List[PulseRecord]]:
    """DC removal, global-max normalisation, phase conversion and per-slot extraction for one trial."""
    patterns = require_patterns(trial)
    min_conf = float(analysis["min_confidence"])
    grids = aligned_grids(trial, patterns, PulseGrid(rep_rate, None, pulse_width), min_conf)
    dc = resolve_dc_offset(trial, patterns, grids, analysis["dc_offset"])
    waveforms = [tf.waveform for tf in trial]
    normalized = normalize_traces(waveforms, normalization_context(waveforms, dc))
    batch = []
    for i, (tf, wf, pattern, grid) in enumerate(zip(trial, normalized, patterns, grids)):
        kind = tf.metadata.get("trace_kind", analysis["trace_kind"])
        to_phase = amplitude_to_phase if kind == "phase_amplitude" else intensity_to_phase
        phase_wf = wf.with_samples(to_phase(wf.samples), units="rad")
        batch.append(extract_pulse_phases(phase_wf, pattern, grid, analysis["window"], min_conf, trace_index=i))
    return batch


def phase_report(trials: Sequence[Sequence[TraceFile]], rep_rate: float, analysis: dict,
                 pulse_width: float = config.DEFAULT_PULSE_WIDTH) -> CorrelationReport:
    records = [trial_phase_records(t, rep_rate, analysis, pulse_width) for t in trials]
    return correlation_report(records, int(analysis["n_max"]), rep_rate,
                              analysis["estimator"], int(analysis["fit_lags"]))


def analyze_phase(
    traces: List[Path] = typer.Argument(..., help="Trace files or directories (one directory per trial)."),
    config_path: Optional[Path] = ConfigOption,
    out: Path = OutOption,
    override: Optional[List[str]] = OverrideOption,
    quiet: bool = QuietOption,
):
    """Phase-correlation statistics per lag n and nominal case, one report per repetition rate."""
    utils.progress("🔍 Analysing phase correlations…", quiet)
    try:
        rc = load_run_config(config_path, override or [])
        groups = group_traces(find_trace_files(traces), rc.rep_rate, quiet)
        written = []
        with utils.output_lock(out) as out_dir, warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DataQualityWarning)
            for rate, trials in groups.items():
                utils.progress(f"\n--- {utils.rate_tag(rate)}: {len(trials)} trial(s) ---", quiet)
                report = phase_report(trials, rate, rc.analysis, float(rc.pulse["width_s"]))
                path = write_report(report, out_dir / f"correlation_{utils.rate_tag(rate)}.txt")
                written.append(path)
                rows = [
                    (f"n={n}", f"{v / np.pi:.5f} π ± {report.max_deviation_std_per_n[n] / np.pi:.5f} π")
                    for n, v in sorted(report.max_deviation_per_n.items())
                ]
                if not quiet:
                    utils.print_table(rows, f"📈  MAX DEVIATION @ {utils.rate_tag(rate)}")
            messages = utils.report_warnings(caught, quiet)
            utils.write_manifest(out_dir, "analyze-phase", rc.to_dict(), written, warnings=messages)

        typer.secho(f"✅ Wrote {len(written)} correlation report(s) to {out}", fg=typer.colors.GREEN)

    except typer.Exit:
        raise
    except Exception as e:
        utils.exit_with_error(e)
