"""Measure how far weakly supervised models generalize away from their labeling functions."""

__version__ = "0.1.0"
