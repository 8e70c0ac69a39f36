"""Forecasting benchmark for sparse, misaligned quarterly consumption series."""

__version__ = "0.1.0"
