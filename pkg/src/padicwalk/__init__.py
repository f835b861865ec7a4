"""Ultrametric diffusion on Q_p^n: symbols, heat kernels, random walks and first passage times."""
__version__ = "0.1.0"
