"""Inverse-propensity-weighted deep networks for causal prediction of censored event times."""

__version__ = "0.1.0"
