# app/ingest.py
"""
Reading and writing of the text artifacts: oscilloscope traces, response
tables, polarimeter logs, run configuration and reports.

Every file is CSV with optional leading `# key: value` metadata lines, the
way scope exports carry their acquisition settings. Numbers are written with
9 significant digits, so read -> write -> read is a fixed point.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import typer

from app import config, utils
from app.corrstats import ESTIMATORS, CaseKey, CaseStats, CorrelationReport, PeakSummary, SpacingStats
from app.errors import ValidationError
from app.linsys import ChainConfig, FrequencyResponse, design_bessel, ideal_delay, identity, tabulated_response
from app.sourcesim import DriftSeries, StokesVector, VisibilityResult
from app.waveform import NominalPattern, Symbol, Waveform

SAMPLING_JITTER_TOLERANCE = 1e-3
TRACE_KINDS = ("phase_amplitude", "intensity")


@dataclass(frozen=True)
class TraceSchema:
    time_col: str = "time_s"
    value_col: str = "value"
    units: str = "V"


@dataclass
class TraceFile:
    waveform: Waveform
    metadata: Dict[str, str] = field(default_factory=dict)
    source: str = ""

    @property
    def pattern(self) -> Optional[NominalPattern]:
        text = self.metadata.get("pattern")
        if not text:
            return None
        seed = self.metadata.get("seed")
        return NominalPattern.from_text(text, int(seed) if seed not in (None, "") else None)

    @property
    def rep_rate_hz(self) -> Optional[float]:
        value = self.metadata.get("rep_rate_hz")
        return float(value) if value else None

    @property
    def trace_kind(self) -> str:
        return self.metadata.get("trace_kind", "intensity")


@dataclass
class PolarimeterLog:
    entries: List[Tuple[float, StokesVector]]
    renormalized_lines: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, k):
        return self.entries[k]


# ---------------------------------------------------------------- helpers

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return config.FLOAT_FORMAT % value
    return str(value)


def _split_metadata(path: Path) -> Tuple[Dict[str, str], int, str]:
    """Leading `# key: value` lines, how many lines they span, and the remaining text."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"{path}: file not found") from None
    lines = text.splitlines()
    meta: Dict[str, str] = {}
    n = 0
    for line in lines:
        if not line.startswith("#") or line.startswith("# ["):
            break
        n += 1
        key, sep, value = line[1:].partition(":")
        if sep:
            meta[key.strip()] = value.strip()
    return meta, n, "\n".join(lines[n:])


def _read_numeric(path: Path, body: str, skip: int, columns: Sequence[str],
                  optional: Sequence[str] = ()) -> pd.DataFrame:
    """Parse a CSV body; `skip` is the number of metadata lines above the header."""
    try:
        df = pd.read_csv(io.StringIO(body), skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise ValidationError(f"{path}: no header row") from None
    except pd.errors.ParserError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    df.columns = [str(c).strip() for c in df.columns]
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ValidationError(f"{path}:{skip + 1}: missing column(s) {missing}")
    keep = list(columns) + [c for c in optional if c in df.columns]
    df = df[keep].copy()
    for col in keep:
        parsed = pd.to_numeric(df[col], errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(parsed)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"{path}:{skip + 2 + row}: cannot parse {col}={df[col].iloc[row]!r} as a number"
            )
        df[col] = parsed
    return df


def _write_text(path: Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc
    return path


def _csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=config.FLOAT_FORMAT, lineterminator="\n")


def _header(meta: Dict[str, object]) -> str:
    return "".join(f"# {k}: {_fmt(v)}\n" for k, v in meta.items())


# ---------------------------------------------------------------- traces

def read_trace_file(path, schema: TraceSchema = TraceSchema()) -> TraceFile:
    path = Path(path)
    meta, skip, body = _split_metadata(path)
    df = _read_numeric(path, body, skip, [schema.time_col, schema.value_col])
    if len(df) < 2:
        raise ValidationError(f"{path}: a trace needs at least 2 samples, found {len(df)}")
    t = df[schema.time_col].to_numpy()
    dt = np.diff(t)
    if np.any(dt <= 0):
        row = int(np.flatnonzero(dt <= 0)[0]) + 1
        raise ValidationError(f"{path}:{skip + 2 + row}: time column is not increasing")
    step = float(np.median(dt))
    jitter = np.abs(dt - step) / step
    if np.any(jitter > SAMPLING_JITTER_TOLERANCE):
        row = int(np.flatnonzero(jitter > SAMPLING_JITTER_TOLERANCE)[0]) + 1
        raise ValidationError(
            f"{path}:{skip + 2 + row}: sampling step deviates {jitter[row - 1]:.2%} from the median"
        )
    sample_rate = 1.0 / step
    if "sample_rate_hz" in meta:
        declared = float(meta["sample_rate_hz"])
        if abs(declared - sample_rate) > SAMPLING_JITTER_TOLERANCE * declared:
            raise ValidationError(
                f"{path}: declared sample rate {declared:g} Sa/s does not match the time column"
            )
        sample_rate = declared
    kind = meta.get("trace_kind")
    if kind is not None and kind not in TRACE_KINDS:
        raise ValidationError(f"{path}: unknown trace_kind '{kind}'")
    units = meta.get("units", schema.units)
    wf = Waveform(df[schema.value_col].to_numpy(), sample_rate, float(t[0]), units)
    return TraceFile(wf, meta, str(path))


def read_trace_csv(path, schema: TraceSchema = TraceSchema()) -> Waveform:
    return read_trace_file(path, schema).waveform


def write_trace_csv(
    path,
    wf: Waveform,
    metadata: Optional[Dict[str, object]] = None,
    schema: TraceSchema = TraceSchema(),
) -> Path:
    meta = dict(metadata or {})
    meta.setdefault("sample_rate_hz", wf.sample_rate)
    meta.setdefault("units", wf.units or schema.units)
    df = pd.DataFrame({schema.time_col: wf.times, schema.value_col: wf.samples})
    return _write_text(path, _header(dict(sorted(meta.items()))) + _csv(df))


def find_trace_files(paths: Sequence) -> List[Path]:
    """CSV traces named directly or found below the given directories, in sorted order."""
    files: List[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.rglob("*.csv")))
        elif p.is_file():
            files.append(p)
        else:
            raise ValidationError(f"'{p}' does not exist")
    if not files:
        raise ValidationError(f"no trace files found in {[str(p) for p in paths]}")
    return files


def group_traces(
    files: Sequence[Path],
    default_rep_rate: Optional[float] = None,
    quiet: bool = False,
) -> Dict[float, List[List[TraceFile]]]:
    """Traces by repetition rate, then one list per trial (the directory a file sits in)."""
    grouped: Dict[float, Dict[str, List[TraceFile]]] = {}
    for f in files:
        if not quiet:
            typer.secho(f"  -> Loading trace: {f}", fg=typer.colors.CYAN, err=True)
        tf = read_trace_file(f)
        rate = tf.rep_rate_hz or default_rep_rate
        if rate is None:
            raise ValidationError(f"{f}: no rep_rate_hz metadata and no repetition rate configured")
        grouped.setdefault(rate, {}).setdefault(str(Path(f).parent), []).append(tf)
    return {
        rate: [trials[d] for d in sorted(trials)] for rate, trials in sorted(grouped.items())
    }


# ---------------------------------------------------------------- response tables

def read_response_table(path, phase_mode: str = "measured") -> np.ndarray:
    """Rows (f_hz, mag_db[, phase_deg]) in file order, validated strictly ascending."""
    path = Path(path)
    _, skip, body = _split_metadata(path)
    df = _read_numeric(path, body, skip, ["f_hz", "mag_db"], optional=["phase_deg"])
    if phase_mode == "measured" and "phase_deg" not in df.columns:
        raise ValidationError(f"{path}: phase_mode 'measured' needs a phase_deg column")
    if len(df) < 2:
        raise ValidationError(f"{path}: a response table needs at least 2 rows")
    f = df["f_hz"].to_numpy()
    steps = np.diff(f)
    if np.any(steps <= 0):
        row = int(np.flatnonzero(steps <= 0)[0]) + 1
        problem = "duplicate frequency" if steps[row - 1] == 0 else "frequency out of order"
        raise ValidationError(f"{path}:{skip + 2 + row}: {problem} {f[row]:g} Hz")
    return df.to_numpy(dtype=float)


def load_response(
    path,
    phase_mode: str = "measured",
    extrapolation: str = "rolloff_db_per_octave",
    rolloff_db_per_octave: float = config.ROLLOFF_DB_PER_OCTAVE,
    delay_s: float = 0.0,
    name: str = "",
) -> FrequencyResponse:
    table = read_response_table(path, phase_mode)
    return tabulated_response(table, phase_mode, extrapolation, rolloff_db_per_octave=rolloff_db_per_octave,
                              delay_s=delay_s, name=name or Path(path).stem)


# ---------------------------------------------------------------- polarimeter

def read_polarimeter_log(path, tolerance: float = config.STOKES_TOLERANCE) -> PolarimeterLog:
    path = Path(path)
    _, skip, body = _split_metadata(path)
    df = _read_numeric(path, body, skip, ["timestamp_s", "s1", "s2", "s3"])
    if df.empty:
        raise ValidationError(f"{path}: polarimeter log has no rows")
    entries, flagged = [], []
    for row, (t, s1, s2, s3) in enumerate(df.itertuples(index=False, name=None)):
        line = skip + 2 + row
        norm = math.sqrt(s1 * s1 + s2 * s2 + s3 * s3)
        if abs(norm - 1.0) > tolerance:
            raise ValidationError(f"{path}:{line}: Stokes vector norm {norm:.6g} is not 1")
        if norm != 1.0:
            vec = StokesVector.normalized(s1, s2, s3)
            if abs(norm - 1.0) > 1e-6:
                flagged.append(line)
        else:
            vec = StokesVector(s1, s2, s3)
        entries.append((float(t), vec))
    return PolarimeterLog(entries, flagged)


def write_polarimeter_log(path, log: Sequence[Tuple[float, StokesVector]]) -> Path:
    df = pd.DataFrame(
        [(t, s.s1, s.s2, s.s3) for t, s in log], columns=["timestamp_s", "s1", "s2", "s3"]
    )
    return _write_text(path, _csv(df))


# ---------------------------------------------------------------- reports

Report = Union[CorrelationReport, VisibilityResult, DriftSeries]


def _section(name: str, df: pd.DataFrame) -> str:
    return f"# [{name}]\n" + _csv(df)


def _correlation_text(report: CorrelationReport) -> str:
    meta = {"report": "correlation", "rep_rate_hz": report.rep_rate_hz, "n_trials": report.n_trials}
    if report.max_deviation_per_n:
        meta["estimator"] = report.estimator
    parts = [_header(meta)]
    if report.per_case:
        rows = [
            (s.key.lag_n, s.key.prev_nominal.value, s.key.cur_nominal.value,
             s.mean_phi, s.std_phi, s.count, report.deviation.get(s.key, math.nan))
            for s in report.per_case
        ]
        parts.append(_section("per_case", pd.DataFrame(
            rows, columns=["n", "prev", "cur", "mean_phi", "std_phi", "count", "deviation"])))
    if report.max_deviation_per_n:
        rows = [(n, report.max_deviation_per_n[n], report.max_deviation_std_per_n.get(n, 0.0))
                for n in sorted(report.max_deviation_per_n)]
        parts.append(_section("max_deviation", pd.DataFrame(rows, columns=["n", "max_deviation", "std"])))
    if report.intensity_by_spacing:
        rows = [(l, s.mean, s.std, s.normalized_mean, s.normalized_std, s.count)
                for l, s in sorted(report.intensity_by_spacing.items())]
        parts.append(_section("intensity_by_spacing", pd.DataFrame(
            rows, columns=["l_ns", "mean", "std", "normalized_mean", "normalized_std", "count"])))
    if report.epsilon_pairs:
        rows = [(a, b, eps) for (a, b), eps in sorted(report.epsilon_pairs.items())]
        parts.append(_section("distinguishability", pd.DataFrame(rows, columns=["a", "b", "epsilon"])))
    if report.peak_stats:
        rows = [(p.group, p.mean_peak, p.std_peak, p.mean_time, p.std_time, p.count)
                for p in sorted(report.peak_stats, key=lambda p: p.group)]
        parts.append(_section("peak_stats", pd.DataFrame(
            rows, columns=["group", "mean_peak", "std_peak", "mean_time_s", "std_time_s", "count"])))
    return "".join(parts)


def _visibility_text(result: VisibilityResult) -> str:
    meta = {"report": "visibility", "label": result.label, "i_max_obs": result.i_max_obs,
            "i_min_obs": result.i_min_obs, "visibility": result.visibility}
    df = pd.DataFrame({"delta_phi": result.delta_phi_grid, "intensity": result.intensities,
                       "error": result.errors})
    return _header(meta) + _section("fringe", df)


def _drift_text(series: DriftSeries) -> str:
    meta = {"report": "drift", "label": series.label, "limit_rad": series.limit_rad,
            "max_angle_rad": series.max_angle, "within_limit": series.within_limit}
    df = pd.DataFrame({"time_s": series.times, "angle_rad": series.angles})
    return _header(meta) + _section("angles", df)


def write_report(report: Report, path, format: str = "tabular_text") -> Path:
    """Sectioned text report; keys and rows are written in sorted order."""
    if format != "tabular_text":
        raise ValidationError(f"unsupported report format '{format}'")
    if isinstance(report, CorrelationReport):
        if report.is_empty:
            raise ValidationError("refusing to write an empty correlation report")
        text = _correlation_text(report)
    elif isinstance(report, VisibilityResult):
        text = _visibility_text(report)
    elif isinstance(report, DriftSeries):
        text = _drift_text(report)
    else:
        raise ValidationError(f"cannot serialise a {type(report).__name__}")
    return _write_text(path, text)


def _sections(path: Path) -> Tuple[Dict[str, str], Dict[str, pd.DataFrame]]:
    meta, _, body = _split_metadata(path)
    sections: Dict[str, List[str]] = {}
    current = None
    for line in body.splitlines():
        if line.startswith("# [") and line.rstrip().endswith("]"):
            current = line.strip()[3:-1]
            sections[current] = []
        elif current is not None and line.strip():
            sections[current].append(line)
    frames = {
        name: pd.read_csv(io.StringIO("\n".join(lines)), keep_default_na=False, na_values=[""])
        for name, lines in sections.items() if lines
    }
    return meta, frames


def read_report(path) -> Report:
    path = Path(path)
    meta, frames = _sections(path)
    kind = meta.get("report")
    if kind == "correlation":
        return _read_correlation(meta, frames)
    if kind == "visibility":
        if "fringe" not in frames:
            raise ValidationError(f"{path}: visibility report has no fringe data")
        df = frames["fringe"]
        return VisibilityResult(
            float(meta["i_max_obs"]), float(meta["i_min_obs"]), float(meta["visibility"]),
            df["delta_phi"].to_numpy(float), df["intensity"].to_numpy(float), df["error"].to_numpy(float),
            meta.get("label", ""),
        )
    if kind == "drift":
        if "angles" not in frames:
            raise ValidationError(f"{path}: drift report has no angle data")
        df = frames["angles"]
        return DriftSeries(df["time_s"].to_numpy(float), df["angle_rad"].to_numpy(float),
                           meta.get("label", ""), float(meta.get("limit_rad", config.DRIFT_LIMIT_RAD)))
    raise ValidationError(f"{path}: unrecognised report type {kind!r}")


def _read_correlation(meta: Dict[str, str], frames: Dict[str, pd.DataFrame]) -> CorrelationReport:
    report = CorrelationReport(float(meta.get("rep_rate_hz", 0.0)), n_trials=int(meta.get("n_trials", 1)),
                               estimator=meta.get("estimator", "case_mean"))
    if "per_case" in frames:
        for n, prev, cur, mean, std, count, dev in frames["per_case"].itertuples(index=False, name=None):
            key = CaseKey(int(n), Symbol.parse(prev), Symbol.parse(cur))
            report.per_case.append(CaseStats(key, float(mean), float(std), int(count)))
            report.deviation[key] = float(dev)
    if "max_deviation" in frames:
        for n, value, std in frames["max_deviation"].itertuples(index=False, name=None):
            report.max_deviation_per_n[int(n)] = float(value)
            report.max_deviation_std_per_n[int(n)] = float(std)
    if "intensity_by_spacing" in frames:
        for l, mean, std, nmean, nstd, count in frames["intensity_by_spacing"].itertuples(index=False, name=None):
            report.intensity_by_spacing[int(l)] = SpacingStats(
                int(l), float(mean), float(std), float(nmean), float(nstd), int(count))
    if "distinguishability" in frames:
        for a, b, eps in frames["distinguishability"].itertuples(index=False, name=None):
            report.epsilon_pairs[(str(a), str(b))] = float(eps)
    if "peak_stats" in frames:
        for group, mp, sp, mt, st, count in frames["peak_stats"].itertuples(index=False, name=None):
            report.peak_stats.append(PeakSummary(str(group), float(mp), float(sp), float(mt), float(st), int(count)))
    return report


# ---------------------------------------------------------------- run configuration

@dataclass
class RunConfig:
    rep_rate: float
    mode: str
    chain: List[dict]
    n_traces: int
    pattern_length: int
    seeds: List[int]
    analysis: dict
    pulse: dict = field(default_factory=dict)
    scope: dict = field(default_factory=dict)
    selection: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)
    rep_rate_sweep: List[float] = field(default_factory=list)
    base_dir: Path = field(default=Path("."))

    def __post_init__(self):
        if self.mode not in utils.MODES:
            raise ValidationError(f"mode must be one of {utils.MODES}, got '{self.mode}'")
        if not isinstance(self.n_traces, int) or self.n_traces < 1:
            raise ValidationError("n_traces must be an integer >= 1")
        if not isinstance(self.pattern_length, int) or self.pattern_length < 2:
            raise ValidationError("pattern_length must be an integer >= 2")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ValidationError("seeds must be a non-empty list of integers")
        for rate in self.rep_rates:
            if not isinstance(rate, (int, float)) or rate <= 0:
                raise ValidationError(f"repetition rate must be a positive number, got {rate!r}")
        if self.analysis.get("trace_kind") not in TRACE_KINDS:
            raise ValidationError(f"analysis.trace_kind must be one of {TRACE_KINDS}")
        dc = self.analysis.get("dc_offset")
        if dc != "auto" and not isinstance(dc, (int, float)):
            raise ValidationError("analysis.dc_offset must be a number or \"auto\"")
        if self.analysis.get("estimator") not in ESTIMATORS:
            raise ValidationError(f"analysis.estimator must be one of {ESTIMATORS}")
        if not isinstance(self.analysis.get("fit_lags"), int) or self.analysis["fit_lags"] < self.analysis["n_max"]:
            raise ValidationError("analysis.fit_lags must be an integer >= analysis.n_max")

    @property
    def rep_rates(self) -> List[float]:
        return [float(r) for r in (self.rep_rate_sweep or [self.rep_rate])]

    def to_dict(self) -> dict:
        return {
            "rep_rate": self.rep_rate, "rep_rate_sweep": list(self.rep_rate_sweep), "mode": self.mode,
            "pulse": self.pulse, "chain": self.chain, "scope": self.scope, "n_traces": self.n_traces,
            "pattern_length": self.pattern_length, "seeds": list(self.seeds), "analysis": self.analysis,
            "selection": self.selection, "source": self.source,
        }

    def _table_path(self, raw: str) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def build_stage(self, stage: dict) -> FrequencyResponse:
        kind = stage.get("kind")
        name = stage.get("name", kind)
        if kind == "bessel":
            return design_bessel(int(stage["order"]), float(stage["cutoff_hz"]), name=name)
        if kind == "tabulated":
            if "path" not in stage:
                raise ValidationError(f"tabulated stage '{name}' needs a path")
            return load_response(self._table_path(stage["path"]), stage["phase_mode"], stage["extrapolation"],
                                 float(stage["rolloff_db_per_octave"]), float(stage["delay_s"]), name)
        if kind == "ideal_delay":
            return ideal_delay(float(stage["delay_s"]), name=name)
        if kind == "identity":
            return identity(name)
        raise ValidationError(f"unknown chain stage kind '{kind}'")

    def electrical_stages(self, only: Optional[Sequence[str]] = None) -> Tuple[FrequencyResponse, ...]:
        """The drive chain, optionally restricted to the stages named in `only`."""
        stages = [s for s in self.chain if not only or s.get("name") in only]
        if only:
            unknown = set(only) - {s.get("name") for s in self.chain}
            if unknown:
                raise ValidationError(f"unknown chain stage(s) {sorted(unknown)}")
        if not stages:
            return (identity(),)
        return tuple(self.build_stage(s) for s in stages)

    def scope_stage(self) -> FrequencyResponse:
        return design_bessel(int(self.scope["order"]), float(self.scope["cutoff_hz"]), name="scope")

    def full_chain(self, only: Optional[Sequence[str]] = None) -> ChainConfig:
        return ChainConfig(self.electrical_stages(only) + (self.scope_stage(),),
                           float(self.scope["sample_rate"]))


def load_run_config(path=None, overrides: Sequence[str] = ()) -> RunConfig:
    """Defaults < JSON file < PSM_* environment < overrides; a missing default file is not an error."""
    path = Path(path or config.DEFAULT_CONFIG_FILE)
    raw: dict = {}
    if path.exists():
        typer.secho(f"  -> Loading config: {path}", fg=typer.colors.CYAN, err=True)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(raw, dict):
            raise ValidationError(f"{path}: top level must be an object")
    elif str(path) != str(config.DEFAULT_CONFIG_FILE):
        raise ValidationError(f"config file '{path}' not found")
    raw = utils.normalise_config(raw)
    utils.apply_overrides(raw, utils.env_overrides(raw) + list(overrides or ()))
    raw = utils.normalise_config(raw)
    unknown = _unknown_keys(raw)
    if unknown:
        raise ValidationError(f"unknown config key(s) {unknown}")
    return RunConfig(**raw, base_dir=path.resolve().parent)


STAGE_KEYS = {
    "bessel": {"order", "cutoff_hz"},
    "tabulated": {"path", "phase_mode", "extrapolation", "rolloff_db_per_octave", "delay_s"},
    "ideal_delay": {"delay_s"},
    "identity": set(),
}


def _unknown_keys(raw: dict) -> List[str]:
    """Dotted paths of every key the defaults do not know; path maps are free-form."""
    template = utils.normalise_config({})
    unknown = sorted(set(raw) - set(template))
    for section in ("pulse", "scope", "analysis", "selection", "source"):
        if not isinstance(raw.get(section), dict):
            raise ValidationError(f"config section '{section}' must be an object")
        unknown += [f"{section}.{k}" for k in sorted(set(raw[section]) - set(template[section]))]
    thermistor = raw["source"]["thermistor"]
    unknown += [f"source.thermistor.{k}" for k in sorted(set(thermistor) - set(template["source"]["thermistor"]))]
    for i, stage in enumerate(raw["chain"]):
        if stage["kind"] not in STAGE_KEYS:
            continue
        allowed = {"kind", "name"} | STAGE_KEYS[stage["kind"]]
        unknown += [f"chain.{i}.{k}" for k in sorted(set(stage) - allowed)]
    return unknown

