"""Time-varying state-policy effect estimators and a Monte Carlo harness."""

__version__ = "0.1.0"
