"""Bayesian causal learning of an independent causal mechanism under
correlated and factorized Gaussian priors."""

__version__ = "0.1.0"
