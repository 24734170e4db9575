"""Desk-scale gloss-free sign language translation pipeline."""

__version__ = "0.1.0"
