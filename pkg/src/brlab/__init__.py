"""Numerical laboratory for boundary-reaction phase transitions."""

__version__ = "0.1.0"
