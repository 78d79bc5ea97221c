"""Numerical laboratory for δ-tube arrangements of lines in the SL2 variety."""

from .sl2_core import GeneralLine, SL2Line, make_line

__all__ = ["GeneralLine", "SL2Line", "make_line"]
