# app/utils.py
import hashlib
import json
import os
import traceback
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import typer

from app import config
from app.errors import ValidationError

MODES = ("phase_characterization", "selection_characterization", "source_model")


def default_chain_stages() -> List[dict]:
    """AWG Bessel, RF amplifier table, modulator table (linear phase)."""
    return [
        {"kind": "bessel", "name": "awg", "order": config.BESSEL_ORDER, "cutoff_hz": config.AWG_CUTOFF_HZ},
        {"kind": "tabulated", "name": "rf_amplifier", "path": str(config.AMPLIFIER_TABLE),
         "phase_mode": "measured"},
        {"kind": "tabulated", "name": "modulator", "path": str(config.MODULATOR_TABLE),
         "phase_mode": "ideal_linear"},
    ]


def normalise_config(raw: dict) -> dict:
    """
    Ensure every section of a run config exists and carries every key.
    Adds the built-in defaults where they are missing.
    """
    raw.setdefault("rep_rate", config.DEFAULT_REP_RATE)
    raw.setdefault("rep_rate_sweep", [])
    raw.setdefault("mode", "phase_characterization")
    raw.setdefault("n_traces", config.DEFAULT_N_TRACES)
    raw.setdefault("pattern_length", config.DEFAULT_PATTERN_LENGTH)
    raw.setdefault("seeds", [config.DEFAULT_SEED])

    pulse = raw.setdefault("pulse", {})
    pulse.setdefault("width_s", config.DEFAULT_PULSE_WIDTH)
    pulse.setdefault("sample_rate", config.SIM_SAMPLE_RATE)

    stages = raw.setdefault("chain", default_chain_stages())
    for i, stage in enumerate(stages):
        stage.setdefault("kind", "identity")
        stage.setdefault("name", f"{stage['kind']}{i}")
        if stage["kind"] == "bessel":
            stage.setdefault("order", config.BESSEL_ORDER)
            stage.setdefault("cutoff_hz", config.AWG_CUTOFF_HZ)
        elif stage["kind"] == "tabulated":
            stage.setdefault("phase_mode", "measured")
            stage.setdefault("extrapolation", "rolloff_db_per_octave")
            stage.setdefault("rolloff_db_per_octave", config.ROLLOFF_DB_PER_OCTAVE)
            stage.setdefault("delay_s", 0.0)
        elif stage["kind"] == "ideal_delay":
            stage.setdefault("delay_s", 0.0)

    scope = raw.setdefault("scope", {})
    scope.setdefault("order", config.BESSEL_ORDER)
    scope.setdefault("cutoff_hz", config.SCOPE_CUTOFF_HZ)
    scope.setdefault("sample_rate", config.SCOPE_SAMPLE_RATE)

    analysis = raw.setdefault("analysis", {})
    analysis.setdefault("n_max", config.DEFAULT_N_MAX)
    analysis.setdefault("l_max", config.DEFAULT_L_MAX)
    analysis.setdefault("dc_offset", "auto")
    analysis.setdefault("window", "center_mean_50pct")
    analysis.setdefault("trace_kind", "phase_amplitude")
    analysis.setdefault("min_confidence", config.ALIGNMENT_MIN_CONFIDENCE)
    analysis.setdefault("estimator", "case_mean")
    analysis.setdefault("fit_lags", config.DEFAULT_FIT_LAGS)

    selection = raw.setdefault("selection", {})
    selection.setdefault("max_spacing", 7)

    source = raw.setdefault("source", {})
    source.setdefault("i_min_sweep", list(config.I_MIN_SWEEP_MA))
    source.setdefault("i_max", config.I_MAX_MA)
    source.setdefault("i_threshold", config.I_THRESHOLD_MA)
    source.setdefault("i_scale", config.I_SCALE_MA)
    source.setdefault("jitter_sigma", 0.05)
    source.setdefault("n_pulses", 1_000_000)
    source.setdefault("imbalance_slots", 1)
    source.setdefault("grid_points", 64)
    source.setdefault("readings_per_point", config.READINGS_PER_POINT)
    source.setdefault("reading_noise", 0.0)
    source.setdefault("laser_pulse_width_s", config.LASER_PULSE_WIDTH)
    source.setdefault("path_gains", {})
    source.setdefault("path_delays_fs", {})
    thermistor = source.setdefault("thermistor", {})
    thermistor.setdefault("r0_ohm", 10_000.0)
    thermistor.setdefault("rad_per_ohm", 0.01)
    return raw


def env_overrides(raw: dict) -> List[str]:
    """
    PSM_* settings that have no command-line flag, as overrides.
    They sit between the config file and the flags, so they are read at call time.
    """
    out = []
    order = os.getenv(config.ENV_PREFIX + "BESSEL_ORDER")
    if order is not None:
        n = _env_number("BESSEL_ORDER", order, int)
        out += [f"chain.{i}.order={n}" for i, s in enumerate(raw.get("chain", [])) if s.get("kind") == "bessel"]
        out.append(f"scope.order={n}")
    rate = os.getenv(config.ENV_PREFIX + "SIM_SAMPLE_RATE")
    if rate is not None:
        out.append(f"pulse.sample_rate={_env_number('SIM_SAMPLE_RATE', rate, float)!r}")
    return out


def _env_number(name: str, text: str, cast):
    try:
        return cast(text.strip())
    except ValueError:
        raise ValidationError(f"{config.ENV_PREFIX}{name}='{text}' is not a valid {cast.__name__}") from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: Iterable[str]) -> dict:
    """Apply `key.path=value` overrides; values are parsed as JSON when possible."""
    for item in overrides or ():
        if "=" not in item:
            raise ValidationError(f"override '{item}' is not of the form key.path=value")
        path, value = item.split("=", 1)
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise ValidationError(f"override '{item}' has an empty key")
        node = raw
        for key in keys[:-1]:
            if isinstance(node, list):
                node = node[_list_index(key, item)]
            else:
                node = node.setdefault(key, {})
        if isinstance(node, list):
            node[_list_index(keys[-1], item)] = _parse_value(value)
        elif isinstance(node, dict):
            node[keys[-1]] = _parse_value(value)
        else:
            raise ValidationError(f"override '{item}' descends into a scalar")
    return raw


def _list_index(key: str, item: str) -> int:
    try:
        return int(key)
    except ValueError:
        raise ValidationError(f"override '{item}': '{key}' is not a list index") from None


def print_table(rows: Sequence[Tuple[str, str]], title: str = "") -> None:
    """Prints a formatted table to the console."""
    if title:
        typer.secho(f"\n{title}", fg=typer.colors.BRIGHT_BLUE, bold=True)
    if not rows:
        return
    w = max(len(r[0]) for r in rows)
    for l, r in rows:
        typer.echo(f"  {l.ljust(w)}  {r}")


def progress(message: str, quiet: bool = False, **style) -> None:
    if not quiet:
        typer.secho(message, **style)


def report_warnings(caught: Sequence, quiet: bool = False) -> List[str]:
    """Echo caught warnings in yellow and return their messages for the manifest."""
    messages = sorted({str(w.message) for w in caught})
    if messages and not quiet:
        shown = messages[:10]
        for msg in shown:
            typer.secho(f"⚠️  {msg}", fg=typer.colors.YELLOW)
        if len(messages) > len(shown):
            typer.secho(f"⚠️  ... and {len(messages) - len(shown)} more", fg=typer.colors.YELLOW)
    return messages


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(
    out_dir: Path,
    command: str,
    resolved: dict,
    files: Iterable[Path],
    seeds: Optional[Sequence[int]] = None,
    chain: Optional[dict] = None,
    warnings: Sequence[str] = (),
    manifest_name: str = config.MANIFEST_FILE,
) -> Path:
    """manifest.json with everything needed to re-run `command`; no timestamps."""
    out_dir = Path(out_dir)
    entries = {
        str(Path(f).relative_to(out_dir)): file_sha256(Path(f))
        for f in sorted(Path(f) for f in files)
    }
    manifest = {
        "tool": config.TOOL_NAME,
        "version": config.TOOL_VERSION,
        "command": command,
        "config": resolved,
        "seeds": list(seeds or []),
        "chain": chain or {},
        "files": entries,
        "warnings": list(warnings),
    }
    path = out_dir / manifest_name
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


@contextmanager
def output_lock(out_dir: Path):
    """Exclusive use of an output directory for the duration of one command."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / config.LOCK_FILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(
            f"output directory '{out_dir}' is in use (remove {config.LOCK_FILE} if no run is active)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        lock.unlink(missing_ok=True)


def exit_with_error(exc: Exception) -> None:
    """Print `exc` the way every command reports failures and exit with its code."""
    if isinstance(exc, ValidationError):
        typer.secho(f"❌ {exc}", fg=typer.colors.RED)
        raise typer.Exit(code=config.EXIT_VALIDATION)
    typer.secho(f"🔥 A critical error occurred: {exc}", fg=typer.colors.RED)
    traceback.print_exception(exc)
    raise typer.Exit(code=config.EXIT_RUNTIME)


def rate_tag(rep_rate: float) -> str:
    return f"{rep_rate / 1e9:g}GHz"
