"""Offline figure generation for fracmfg run records."""

__version__ = "0.1.0"

from .render import KINDS, FigureSpec, load_record, render

__all__ = ["KINDS", "FigureSpec", "load_record", "render"]
