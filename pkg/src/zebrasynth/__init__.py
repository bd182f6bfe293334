"""Synthetic aerial zebra scenes with geometric ground truth and detection metrics."""

__version__ = "0.1.0"
