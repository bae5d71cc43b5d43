"""Figure generation for adaptation-speed experiment output directories."""

__version__ = "0.1.0"

from .figures import FigureSpec, RenderResult, load_spec, render, render_all  # noqa: F401
