"""Multinomial logit models with latent consideration sets, fitted by MCMC."""

__version__ = "0.1.0"
