"""Control design and metrology analysis for mobile quantum sensors."""

__version__ = "0.1.0"
