"""Spatio-temporal temperature field modelling.

Fits a hierarchical Bayesian model with a site-specific interaction trend
and a nonstationary residual covariance obtained by deforming geographic
space, predicts at unmonitored sites with calibrated intervals, and
benchmarks against ordinary kriging.
"""

__version__ = "0.1.0"

from stfield.errors import ConfigError, DataError, NumericalError

__all__ = ["ConfigError", "DataError", "NumericalError", "__version__"]
