# app/cli_commands/distinguishability.py
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import typer

from app import config, utils
from app.cli_commands.analyze_intensity import normalized_trial
from app.cli_commands.options import ConfigOption, OutOption, OverrideOption, QuietOption
from app.cli_commands.plot import plot_overlay
from app.corrstats import CorrelationReport, distinguishability_table, max_distinguishability, peak_stats_by_group
from app.errors import DataQualityWarning, ValidationError
from app.ingest import TraceFile, find_trace_files, group_traces, load_run_config, write_report
from app.phasemap import PulseRecord, collect_pulse_windows, extract_pulse_peaks
from app.waveform import PATH_ALPHABET, SELECTION_ALPHABET, Waveform

GROUPINGS = ("auto", "path", "spacing")


def group_label(record: PulseRecord, grouping: str) -> Optional[str]:
    if grouping == "path":
        return record.nominal.value if record.nominal in PATH_ALPHABET else None
    if record.spacing_prev_ns is None:
        return None
    return f"l={record.spacing_prev_ns}"


def pulse_groups(trials: Sequence[Sequence[TraceFile]], rep_rate: float, analysis: dict, grouping: str,
                 pulse_width: float = config.DEFAULT_PULSE_WIDTH):
    """Slot-long pulse windows and their records, keyed by path or by spacing."""
    windows: Dict[str, List[Waveform]] = {}
    records: Dict[str, List[PulseRecord]] = {}
    for trial in trials:
        normalized, patterns, grids = normalized_trial(trial, rep_rate, analysis, pulse_width)
        if grouping == "auto":
            grouping = "spacing" if set(patterns[0].alphabet) <= set(SELECTION_ALPHABET) else "path"
        for i, (wf, pattern, grid) in enumerate(zip(normalized, patterns, grids)):
            peaks = extract_pulse_peaks(wf, grid, pattern, trace_index=i)
            for record, window in collect_pulse_windows(wf, peaks, grid):
                label = group_label(record, grouping)
                if label is None:
                    continue
                windows.setdefault(label, []).append(window)
                records.setdefault(label, []).append(record)
    if len(windows) < 2:
        raise ValidationError("need at least two pulse groups to compare")
    return windows, records


def distinguishability(
    traces: List[Path] = typer.Argument(..., help="Trace files or directories (one directory per trial)."),
    group_by: str = typer.Option("auto", "--group-by", "-g", help=f"One of {', '.join(GROUPINGS)}."),
    overlay: Optional[Path] = typer.Option(None, "--overlay", help="Also write a persistence-style SVG overlay."),
    config_path: Optional[Path] = ConfigOption,
    out: Path = OutOption,
    override: Optional[List[str]] = OverrideOption,
    quiet: bool = QuietOption,
):
    """Pairwise ε between averaged pulse shapes of each path (or each spacing)."""
    utils.progress("🔬 Comparing averaged pulse shapes…", quiet)
    try:
        if group_by not in GROUPINGS:
            raise ValidationError(f"--group-by must be one of {GROUPINGS}")
        rc = load_run_config(config_path, override or [])
        groups = group_traces(find_trace_files(traces), rc.rep_rate, quiet)
        written = []
        with utils.output_lock(out) as out_dir, warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DataQualityWarning)
            for rate, trials in groups.items():
                windows, records = pulse_groups(trials, rate, rc.analysis, group_by, float(rc.pulse["width_s"]))
                report = CorrelationReport(rate, n_trials=len(trials))
                report.epsilon_pairs = distinguishability_table(windows)
                report.peak_stats = peak_stats_by_group(records)
                tag = utils.rate_tag(rate)
                written.append(write_report(report, out_dir / f"distinguishability_{tag}.txt"))
                if overlay is not None:
                    target = overlay if len(groups) == 1 else overlay.with_name(f"{overlay.stem}_{tag}.svg")
                    utils.progress(f"  -> Overlay saved to {plot_overlay(windows, target)}", quiet,
                                   fg=typer.colors.CYAN)
                if not quiet:
                    pair_rows = [(f"{a} vs {b}", f"{eps:.3e}") for (a, b), eps in report.epsilon_pairs.items()]
                    utils.print_table(pair_rows, f"🧮  ε BETWEEN GROUPS @ {tag}")
                    max_rows = [(g, f"{eps:.3e}") for g, eps in max_distinguishability(report.epsilon_pairs).items()]
                    utils.print_table(max_rows, "🔝  MAX ε PER GROUP")
            messages = utils.report_warnings(caught, quiet)
            utils.write_manifest(out_dir, "distinguishability", rc.to_dict(), written, warnings=messages)

        typer.secho(f"✅ Wrote {len(written)} distinguishability report(s) to {out}", fg=typer.colors.GREEN)

    except typer.Exit:
        raise
    except Exception as e:
        utils.exit_with_error(e)
