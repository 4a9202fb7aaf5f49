"""Pooled-output scoring and grade-boundary calibration toolkit."""

__version__ = "0.1.0"
