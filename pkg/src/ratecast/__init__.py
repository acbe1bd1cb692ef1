"""Extreme-value and long-memory forecasting of hourly event rates."""

__version__ = "0.1.0"
