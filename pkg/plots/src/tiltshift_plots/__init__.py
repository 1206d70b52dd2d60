"""Figure renderer for the covariate-shift experiment CSVs."""

__version__ = "0.1.0"

from .render import (  # noqa: F401
    FigureSpec,
    SchemaMismatchError,
    build_spec,
    render,
    render_directory,
)
