"""Background-robust continuous sign language recognition toolkit."""

__version__ = "0.1.0"
