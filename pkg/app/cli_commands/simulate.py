# app/cli_commands/simulate.py
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import typer

from app import utils
from app.cli_commands.options import (
    ConfigOption, NTracesOption, OutOption, OverrideOption, QuietOption, RepRateOption, SeedOption,
    flag_overrides,
)
from app.errors import DataQualityWarning
from app.ingest import RunConfig, load_run_config, write_trace_csv
from app.linsys import ChainConfig, chain, simulate_chain
from app.sourcesim import calibrate_vpi, emulate_source_output, modulate_intensity, select_paths
from app.waveform import (
    PATH_ALPHABET,
    PHASE_ALPHABET,
    PHASE_LEVELS,
    SELECTION_LEVELS,
    NominalPattern,
    PulseTrainSpec,
    Symbol,
    Waveform,
    make_pulse_train,
    random_pattern,
    random_spacing_pattern,
)

TRACE_KIND = {
    "phase_characterization": "phase_amplitude",
    "selection_characterization": "intensity",
    "source_model": "intensity",
}


def trace_seeds(seed: int, n: int) -> List[int]:
    """Independent per-trace seeds derived from one trial seed."""
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(n)]


def pulse_spec(rc: RunConfig, rep_rate: float) -> PulseTrainSpec:
    levels = PHASE_LEVELS if rc.mode == "phase_characterization" else SELECTION_LEVELS
    return PulseTrainSpec(rep_rate, float(rc.pulse["width_s"]), levels, rc.pattern_length,
                          float(rc.pulse["sample_rate"]))


def _path_map(raw: Dict[str, float]) -> Dict[Symbol, float]:
    return {Symbol.parse(k): float(v) for k, v in raw.items()}


def simulate_traces(
    rc: RunConfig,
    rep_rate: float,
    seed: int,
    n_traces: Optional[int] = None,
    stages: Optional[Sequence[str]] = None,
) -> List[Tuple[Waveform, NominalPattern]]:
    """Scope-rate traces and their nominal patterns for one trial."""
    spec = pulse_spec(rc, rep_rate)
    scope_rate = float(rc.scope["sample_rate"])
    electrical = chain(rc.electrical_stages(stages))
    scope_only = ChainConfig((rc.scope_stage(),), scope_rate)
    full = rc.full_chain(stages)
    vpi_scale = calibrate_vpi(spec, electrical) if rc.mode == "selection_characterization" else 1.0
    out = []
    for tseed in trace_seeds(seed, n_traces or rc.n_traces):
        if rc.mode == "phase_characterization":
            pattern = random_pattern(tseed, PHASE_ALPHABET, rc.pattern_length)
            trace = simulate_chain(make_pulse_train(spec, pattern), full)
        elif rc.mode == "selection_characterization":
            pattern = random_spacing_pattern(tseed, rc.pattern_length, int(rc.selection["max_spacing"]))
            optical = modulate_intensity(make_pulse_train(spec, pattern), electrical, vpi_scale)
            trace = simulate_chain(optical, scope_only)
        else:
            pattern = random_pattern(tseed, PATH_ALPHABET, rc.pattern_length)
            selection = select_paths(pattern, _path_map(rc.source["path_delays_fs"]),
                                     _path_map(rc.source["path_gains"]))
            trace = emulate_source_output(pattern, selection, spec, electrical, scope_only,
                                          float(rc.source["laser_pulse_width_s"]))
        out.append((trace, pattern))
    return out


def simulate(
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[List[int]] = SeedOption,
    rep_rate: Optional[List[float]] = RepRateOption,
    n_traces: Optional[int] = NTracesOption,
    out: Path = OutOption,
    override: Optional[List[str]] = OverrideOption,
    stages: Optional[List[str]] = typer.Option(
        None, "--stages", help="Keep only these named chain stages (component ablation); repeatable."
    ),
    quiet: bool = QuietOption,
):
    """Generate drive patterns, propagate them through the chain and write scope traces."""
    utils.progress("🚀 Starting simulation…", quiet)
    try:
        rc = load_run_config(config_path, flag_overrides(seed, rep_rate, n_traces, override))
        # everything that can be rejected is checked before the output directory is touched
        specs = [pulse_spec(rc, rate) for rate in rc.rep_rates]
        chain_info = rc.full_chain(stages).describe()
        kind = TRACE_KIND[rc.mode]
        utils.progress(f"\n--- Mode: {rc.mode}, {len(specs)} rate(s), {len(rc.seeds)} trial(s) ---", quiet)

        written: List[Path] = []
        with utils.output_lock(out) as out_dir, warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DataQualityWarning)
            for spec in specs:
                for trial_seed in rc.seeds:
                    trial_dir = out_dir / utils.rate_tag(spec.rep_rate) / f"seed_{trial_seed}"
                    utils.progress(f"  -> Simulating {rc.n_traces} traces into {trial_dir}",
                                   quiet, fg=typer.colors.CYAN)
                    traces = simulate_traces(rc, spec.rep_rate, trial_seed, stages=stages)
                    for k, (trace, pattern) in enumerate(traces):
                        meta = {
                            "mode": rc.mode,
                            "pattern": pattern.to_text(),
                            "rep_rate_hz": spec.rep_rate,
                            "seed": pattern.seed,
                            "trace_kind": kind,
                            "trial_seed": trial_seed,
                        }
                        written.append(write_trace_csv(trial_dir / f"trace_{k:03d}.csv", trace, meta))
            messages = utils.report_warnings(caught, quiet)
            utils.write_manifest(out_dir, "simulate", rc.to_dict(), written, rc.seeds, chain_info, messages)

        slots = len(written) * rc.pattern_length
        typer.secho(f"✅ Wrote {len(written)} traces ({slots} pulse slots) to {out}", fg=typer.colors.GREEN)

    except typer.Exit:
        raise
    except Exception as e:
        utils.exit_with_error(e)
