# app/cli_commands/visibility.py
from pathlib import Path
from typing import List, Optional

import numpy as np
import typer

from app import utils
from app.cli_commands.options import ConfigOption, OutOption, OverrideOption, QuietOption, SeedOption, flag_overrides
from app.ingest import load_run_config, write_report
from app.sourcesim import GainSwitchConfig, VisibilityResult, fringe_scan, gain_switched_phases, resistance_to_phase


def scan_grid(source: dict) -> np.ndarray:
    """Delta-phi points of one full fringe period, from a thermistor resistance sweep."""
    th = source["thermistor"]
    r0, k = float(th["r0_ohm"]), float(th["rad_per_ohm"])
    resistance = r0 + np.linspace(0.0, 2.0 * np.pi / k, int(source["grid_points"]))
    return resistance_to_phase(resistance, r0, k)


def visibility_for(source: dict, i_min: float, seed: int, survival: Optional[float] = None) -> VisibilityResult:
    cfg = GainSwitchConfig(
        i_min=float(i_min), i_max=float(source["i_max"]), i_threshold=float(source["i_threshold"]),
        i_scale=float(source["i_scale"]), jitter_sigma=float(source["jitter_sigma"]), seed=seed,
        survival=survival,
    )
    phases = gain_switched_phases(cfg, int(source["n_pulses"]) + int(source["imbalance_slots"]))
    return fringe_scan(
        phases, 1.0, scan_grid(source), int(source["imbalance_slots"]),
        int(source["readings_per_point"]), float(source["reading_noise"]), seed,
        label=f"i_min={i_min:g} mA",
    )


def visibility(
    i_min: Optional[List[float]] = typer.Option(None, "--i-min", help="Minimum drive current (mA); repeatable."),
    survival: Optional[float] = typer.Option(None, "--survival", help="Force the phase survival probability."),
    config_path: Optional[Path] = ConfigOption,
    seed: Optional[List[int]] = SeedOption,
    out: Path = OutOption,
    override: Optional[List[str]] = OverrideOption,
    quiet: bool = QuietOption,
):
    """Fringe scans of the asymmetric interferometer and their visibility per minimum drive current."""
    utils.progress("🌈 Scanning interference fringes…", quiet)
    try:
        rc = load_run_config(config_path, flag_overrides(seed=seed, override=override))
        currents = list(i_min or rc.source["i_min_sweep"])
        trial_seed = rc.seeds[0]
        results = [visibility_for(rc.source, current, trial_seed, survival) for current in currents]
        written = []
        with utils.output_lock(out) as out_dir:
            for current, result in zip(currents, results):
                written.append(write_report(result, out_dir / f"visibility_imin_{current:g}mA.txt"))
            utils.write_manifest(out_dir, "visibility", rc.to_dict(), written, [trial_seed])

        rows = [(r.label, f"V = {r.visibility:.3e}") for r in results]
        utils.print_table(rows, "🌈  FRINGE VISIBILITY")
        typer.secho(f"✅ Wrote {len(written)} visibility report(s) to {out}", fg=typer.colors.GREEN)

    except typer.Exit:
        raise
    except Exception as e:
        utils.exit_with_error(e)
