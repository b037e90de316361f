"""Figure rendering for solver run outputs (records, summaries, field dumps)."""

__version__ = "0.1.0"

from .figures import FIGURE_KINDS, FigureSpec, render
from .io import (FieldDump, SchemaError, read_field, read_records,
                 read_summary)

__all__ = ["FIGURE_KINDS", "FieldDump", "FigureSpec", "SchemaError",
           "read_field", "read_records", "read_summary", "render"]
