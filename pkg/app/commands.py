# app/commands.py
import typer

from .cli_commands.simulate import simulate
from .cli_commands.analyze_phase import analyze_phase
from .cli_commands.analyze_intensity import analyze_intensity
from .cli_commands.distinguishability import distinguishability
from .cli_commands.visibility import visibility
from .cli_commands.drift import drift
from .cli_commands.plot import plot

app = typer.Typer(
    help="Simulate bandwidth-limited modulation chains of a QKD source and characterise their "
         "pattern correlations, fringe visibility, path distinguishability and polarisation drift.",
    add_completion=False,
    no_args_is_help=True,
    rich_markup_mode="markdown"
)

app.command()(simulate)
app.command("analyze-phase")(analyze_phase)
app.command("analyze-intensity")(analyze_intensity)
app.command()(distinguishability)
app.command()(visibility)
app.command()(drift)
app.command()(plot)
