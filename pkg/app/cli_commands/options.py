# app/cli_commands/options.py
"""Options shared by several commands; each can also come from a PSM_* environment variable."""
from typing import List, Optional

import typer

from app import config

ConfigOption = typer.Option(
    None, "--config", "-c", envvar="PSM_CONFIG",
    help="Run configuration JSON (defaults to run_config.json when present).",
)
OutOption = typer.Option(
    config.DEFAULT_OUTPUT_DIR, "--out", "-o", envvar="PSM_OUT", help="Output directory."
)
SeedOption = typer.Option(
    None, "--seed", envvar="PSM_SEED", help="Base seed; repeat for several trials.",
)
RepRateOption = typer.Option(
    None, "--rep-rate", envvar="PSM_REP_RATE", help="Repetition rate in Hz; repeat for a sweep.",
)
NTracesOption = typer.Option(None, "--n-traces", envvar="PSM_N_TRACES", help="Traces per trial.")
OverrideOption = typer.Option(
    None, "--override", help="Config override key.path=value (JSON value), repeatable.",
)
QuietOption = typer.Option(False, "--quiet", "-q", help="Only print errors and the final summary.")


def flag_overrides(
    seed: Optional[List[int]] = None,
    rep_rate: Optional[List[float]] = None,
    n_traces: Optional[int] = None,
    override: Optional[List[str]] = None,
) -> List[str]:
    """Turn the dedicated flags into overrides applied after the config file."""
    out = list(override or [])
    if seed:
        out.append(f"seeds={list(seed)}")
    if rep_rate:
        rates = [float(r) for r in rep_rate]
        out.append(f"rep_rate={rates[0]!r}")
        out.append(f"rep_rate_sweep={rates if len(rates) > 1 else []}")
    if n_traces is not None:
        out.append(f"n_traces={int(n_traces)}")
    return out
