# app/cli_commands/drift.py
from pathlib import Path
from typing import Optional

import numpy as np
import typer

from app import config, utils
from app.cli_commands.options import OutOption, QuietOption
from app.ingest import read_polarimeter_log, write_report
from app.sourcesim import drift_series


def drift(
    log: Path = typer.Argument(..., help="Polarimeter log with rows timestamp_s,s1,s2,s3."),
    limit: float = typer.Option(config.DRIFT_LIMIT_RAD, "--limit", help="Verdict threshold in rad."),
    out: Path = OutOption,
    quiet: bool = QuietOption,
):
    """Polarisation drift: angle on the Poincaré sphere to the first logged state."""
    utils.progress("🧭 Measuring polarisation drift…", quiet)
    try:
        utils.progress(f"  -> Loading log: {log}", quiet, fg=typer.colors.CYAN)
        entries = read_polarimeter_log(log)
        if entries.renormalized_lines:
            typer.secho(
                f"⚠️  renormalised Stokes vectors on line(s) {entries.renormalized_lines}",
                fg=typer.colors.YELLOW,
            )
        series = drift_series(entries, label=log.stem, limit_rad=limit)
        with utils.output_lock(out) as out_dir:
            path = write_report(series, out_dir / f"drift_{log.stem}.txt")
            utils.write_manifest(
                out_dir, "drift", {"log": str(log), "limit_rad": limit}, [path],
                warnings=[f"renormalised line {n}" for n in entries.renormalized_lines],
            )

        span_min = series.times[-1] / 60.0
        verdict = "below" if series.within_limit else "ABOVE"
        colour = typer.colors.GREEN if series.within_limit else typer.colors.YELLOW
        typer.secho(
            f"✅ {len(series.angles)} readings over {span_min:.0f} min, max angle "
            f"{series.max_angle / np.pi:.4f} π ({verdict} {limit / np.pi:.4f} π)",
            fg=colour,
        )

    except typer.Exit:
        raise
    except Exception as e:
        utils.exit_with_error(e)
