"""Energy-efficiency maximization on wireless links via fractional programming."""

__version__ = "0.1.0"
