"""Likelihood-free inference with calibrated classifiers."""

__version__ = "0.1.0"
