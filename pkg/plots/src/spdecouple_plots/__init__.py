"""Figure rendering for the coupling simulation's CSV artifacts."""

from .render import KINDS, PlotJob, render
from .schema import SCHEMAS, MissingFile, SchemaError, read_table

__version__ = "1.0.0"
