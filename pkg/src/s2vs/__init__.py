"""Self-supervised video similarity learning at desk scale."""

__version__ = "0.1.0"
