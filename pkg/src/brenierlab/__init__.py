"""Brenier maps from the standard Gaussian to 1-log-concave measures, with
contraction, rigidity, stability and Poincare-gap diagnostics."""

__version__ = "0.1.0"
