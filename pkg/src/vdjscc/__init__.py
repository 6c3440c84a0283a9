"""Desk-scale video joint source-channel coding simulator on numpy."""

__version__ = "0.1.0"
