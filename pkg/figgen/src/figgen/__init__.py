"""Figure rendering for irltrack experiment CSV logs."""

from .render import KINDS, FigureSpec, FiggenError, load_joint_log, render

__all__ = ["FigureSpec", "FiggenError", "KINDS", "load_joint_log", "render"]

__version__ = "0.1.0"
