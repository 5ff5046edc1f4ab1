"""Bayesian panel VARs estimated by integrated rotated Gaussian approximation."""

__version__ = "0.1.0"
