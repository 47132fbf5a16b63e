# app/cli_commands/plot.py
from pathlib import Path
from typing import List, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import typer  # noqa: E402

from app import config, utils  # noqa: E402
from app.cli_commands.options import QuietOption  # noqa: E402
from app.corrstats import CorrelationReport, max_distinguishability  # noqa: E402
from app.errors import ValidationError  # noqa: E402
from app.ingest import read_report  # noqa: E402
from app.sourcesim import DriftSeries, VisibilityResult  # noqa: E402
from app.waveform import Waveform  # noqa: E402

STYLES = ("auto", "deviation", "spacing", "epsilon", "fringe", "drift")

# deterministic SVG element ids
plt.rcParams["svg.hashsalt"] = config.TOOL_NAME
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _rate_label(report: CorrelationReport) -> str:
    return utils.rate_tag(report.rep_rate_hz) if report.rep_rate_hz else "report"


def plot_deviation(reports: Sequence[CorrelationReport], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in sorted(reports, key=lambda r: r.rep_rate_hz):
        n = sorted(r.max_deviation_per_n)
        y = np.array([r.max_deviation_per_n[k] for k in n]) / np.pi
        err = np.array([r.max_deviation_std_per_n.get(k, 0.0) for k in n]) / np.pi
        ax.errorbar(n, y, yerr=err, marker="o", capsize=3, label=_rate_label(r))
    ax.set_xlabel("n")
    ax.set_ylabel("max phase deviation (π rad)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_spacing(reports: Sequence[CorrelationReport], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in sorted(reports, key=lambda r: r.rep_rate_hz):
        rows = [s for _, s in sorted(r.intensity_by_spacing.items()) if s.count]
        ax.errorbar([s.spacing_ns for s in rows], [s.normalized_mean for s in rows],
                    yerr=[s.normalized_std for s in rows], marker="o", capsize=3, label=_rate_label(r))
    ax.set_xlabel("spacing to previous pulse l (ns)")
    ax.set_ylabel("normalised mean peak intensity")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_epsilon(reports: Sequence[CorrelationReport], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / len(reports)
    for i, r in enumerate(reports):
        per_group = max_distinguishability(r.epsilon_pairs)
        x = np.arange(len(per_group)) + i * width
        ax.bar(x, list(per_group.values()), width=width, label=_rate_label(r))
        ax.set_xticks(np.arange(len(per_group)) + 0.4 - width / 2, list(per_group))
    ax.set_yscale("log")
    ax.set_ylabel("max ε against other groups")
    ax.legend()
    return _save(fig, path)


def plot_fringe(results: Sequence[VisibilityResult], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in results:
        ax.errorbar(r.delta_phi_grid, r.intensities, yerr=r.errors, fmt="o", markersize=3, capsize=2,
                    label=f"{r.label} (V={r.visibility:.2e})".strip())
    ax.set_xlabel("Δφ (rad)")
    ax.set_ylabel("mean interference reading")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_drift(series: Sequence[DriftSeries], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for s in series:
        ax.plot(s.times / 60.0, s.angles / np.pi, marker=".", label=s.label or "drift")
    ax.axhline(series[0].limit_rad / np.pi, color="grey", linestyle="--", label="limit")
    ax.set_xlabel("time (min)")
    ax.set_ylabel("angle to t=0 (π rad)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_overlay(groups: Mapping[str, Sequence[Waveform]], path: Path, max_traces: int = 200) -> Path:
    """Persistence-style view: every pulse window of a group drawn translucently, mean on top."""
    if not groups:
        raise ValidationError("no data: nothing to overlay")
    labels = sorted(groups)
    fig, axes = plt.subplots(1, len(labels), figsize=(3 * len(labels), 3), sharey=True, squeeze=False)
    for ax, label in zip(axes[0], labels):
        windows = list(groups[label])
        t = windows[0].times * 1e12
        for wf in windows[:max_traces]:
            ax.plot(t, wf.samples, color="tab:blue", alpha=0.05, linewidth=0.8)
        ax.plot(t, np.mean([wf.samples for wf in windows], axis=0), color="black", linewidth=1.2)
        ax.set_title(label)
        ax.set_xlabel("t (ps)")
    axes[0][0].set_ylabel("normalised intensity")
    return _save(fig, path)


def render(reports: List, path: Path, style: str = "auto") -> Path:
    """Pick the chart for a homogeneous list of reports and write it as SVG."""
    if style not in STYLES:
        raise ValidationError(f"style must be one of {STYLES}")
    if not reports:
        raise ValidationError("no data: no reports given")
    kinds = {type(r) for r in reports}
    if len(kinds) > 1:
        raise ValidationError("cannot mix report types in one plot")
    kind = kinds.pop()
    if kind is VisibilityResult:
        if style not in ("auto", "fringe"):
            raise ValidationError(f"style '{style}' does not fit a visibility report")
        return plot_fringe(reports, path)
    if kind is DriftSeries:
        if style not in ("auto", "drift"):
            raise ValidationError(f"style '{style}' does not fit a drift report")
        return plot_drift(reports, path)
    if style == "auto":
        if all(r.max_deviation_per_n for r in reports):
            style = "deviation"
        elif all(r.intensity_by_spacing for r in reports):
            style = "spacing"
        elif all(r.epsilon_pairs for r in reports):
            style = "epsilon"
        else:
            raise ValidationError("no data: the report has no plottable section")
    needed = {"deviation": "max_deviation_per_n", "spacing": "intensity_by_spacing", "epsilon": "epsilon_pairs"}
    if style not in needed:
        raise ValidationError(f"style '{style}' does not fit a correlation report")
    if not all(getattr(r, needed[style]) for r in reports):
        raise ValidationError(f"no data: a report has no {needed[style]} section")
    return {"deviation": plot_deviation, "spacing": plot_spacing, "epsilon": plot_epsilon}[style](reports, path)


def plot(
    reports: List[Path] = typer.Argument(..., help="Report files written by the analysis commands."),
    output: Path = typer.Option(Path("plot.svg"), "--output", "-o", help="Name of the output SVG file."),
    style: str = typer.Option("auto", "--style", "-s", help=f"One of {', '.join(STYLES)}."),
    quiet: bool = QuietOption,
):
    """Render one or more reports as a static SVG chart."""
    utils.progress("Generating chart...", quiet)
    try:
        loaded = []
        for path in reports:
            utils.progress(f"  -> Loading report: {path}", quiet, fg=typer.colors.CYAN)
            loaded.append(read_report(path))
        written = render(loaded, output, style)
        utils.write_manifest(
            written.parent, "plot", {"reports": [str(p) for p in reports], "style": style}, [written],
            manifest_name=f"{written.stem}.manifest.json",
        )
        typer.secho(f"✅  Chart saved to {written}", fg=typer.colors.GREEN)

    except typer.Exit:
        raise
    except Exception as e:
        utils.exit_with_error(e)
