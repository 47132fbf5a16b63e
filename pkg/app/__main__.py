# app/__main__.py
"""Entry point for `python -m app` (psm-sim)."""
from .commands import app

if __name__ == "__main__":
    app(prog_name="psm-sim")
