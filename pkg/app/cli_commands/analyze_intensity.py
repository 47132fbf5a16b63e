# app/cli_commands/analyze_intensity.py
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import typer

from app import config, utils
from app.cli_commands.analyze_phase import aligned_grids, require_patterns, resolve_dc_offset
from app.cli_commands.options import ConfigOption, OutOption, OverrideOption, QuietOption
from app.corrstats import CorrelationReport, intensity_by_spacing, peak_stats_by_group
from app.errors import DataQualityWarning
from app.ingest import TraceFile, find_trace_files, group_traces, load_run_config, write_report
from app.phasemap import PulseGrid, PulseRecord, extract_pulse_peaks, normalization_context, normalize_traces
from app.waveform import PATH_ALPHABET


def normalized_trial(trial: Sequence[TraceFile], rep_rate: float, analysis: dict,
                     pulse_width: float = config.DEFAULT_PULSE_WIDTH) -> Tuple[list, list, list]:
    """Aligned grids and DC-corrected, globally normalised waveforms of one trial."""
    patterns = require_patterns(trial)
    grids = aligned_grids(trial, patterns, PulseGrid(rep_rate, None, pulse_width),
                          float(analysis["min_confidence"]))
    dc = resolve_dc_offset(trial, patterns, grids, analysis["dc_offset"])
    waveforms = [tf.waveform for tf in trial]
    return normalize_traces(waveforms, normalization_context(waveforms, dc)), patterns, grids


def trial_peak_records(trial: Sequence[TraceFile], rep_rate: float, analysis: dict,
                       pulse_width: float = config.DEFAULT_PULSE_WIDTH) -> List[List[PulseRecord]]:
    normalized, patterns, grids = normalized_trial(trial, rep_rate, analysis, pulse_width)
    return [
        extract_pulse_peaks(wf, grid, pattern, trace_index=i)
        for i, (wf, pattern, grid) in enumerate(zip(normalized, patterns, grids))
    ]


def intensity_report(trials: Sequence[Sequence[TraceFile]], rep_rate: float, analysis: dict,
                     pulse_width: float = config.DEFAULT_PULSE_WIDTH) -> CorrelationReport:
    """Peak intensity by spacing l; per-path peak and timing statistics for path patterns."""
    batch = [records for t in trials for records in trial_peak_records(t, rep_rate, analysis, pulse_width)]
    report = CorrelationReport(rep_rate, n_trials=len(trials))
    report.intensity_by_spacing = intensity_by_spacing(batch, int(analysis["l_max"]))
    by_path: Dict[str, List[PulseRecord]] = {}
    for records in batch:
        for r in records:
            if r.nominal in PATH_ALPHABET:
                by_path.setdefault(r.nominal.value, []).append(r)
    if by_path:
        report.peak_stats = peak_stats_by_group(by_path)
    return report


def analyze_intensity(
    traces: List[Path] = typer.Argument(..., help="Trace files or directories (one directory per trial)."),
    config_path: Optional[Path] = ConfigOption,
    out: Path = OutOption,
    override: Optional[List[str]] = OverrideOption,
    quiet: bool = QuietOption,
):
    """Pulse peak intensity grouped by spacing to the previous pulse (stable-point correlations)."""
    utils.progress("🔍 Analysing intensity correlations…", quiet)
    try:
        rc = load_run_config(config_path, override or [])
        groups = group_traces(find_trace_files(traces), rc.rep_rate, quiet)
        written = []
        with utils.output_lock(out) as out_dir, warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DataQualityWarning)
            for rate, trials in groups.items():
                report = intensity_report(trials, rate, rc.analysis, float(rc.pulse["width_s"]))
                written.append(write_report(report, out_dir / f"intensity_{utils.rate_tag(rate)}.txt"))
                if not quiet:
                    rows = [
                        (f"l={l} ns", f"{s.normalized_mean:.4f} ± {s.normalized_std:.4f}  (n={s.count})")
                        for l, s in sorted(report.intensity_by_spacing.items())
                    ]
                    utils.print_table(rows, f"💡  NORMALISED PEAK INTENSITY @ {utils.rate_tag(rate)}")
                    peak_rows = [
                        (p.group, f"peak {p.mean_peak:.4f} ± {p.std_peak:.4f}, "
                                  f"t {p.mean_time * 1e12:.2f} ± {p.std_time * 1e12:.2f} ps")
                        for p in report.peak_stats
                    ]
                    if peak_rows:
                        utils.print_table(peak_rows, "🛤️  PER-PATH PEAKS")
            messages = utils.report_warnings(caught, quiet)
            utils.write_manifest(out_dir, "analyze-intensity", rc.to_dict(), written, warnings=messages)

        typer.secho(f"✅ Wrote {len(written)} intensity report(s) to {out}", fg=typer.colors.GREEN)

    except typer.Exit:
        raise
    except Exception as e:
        utils.exit_with_error(e)
