"""Exponential family of random CPTP maps on the Stiefel manifold."""
__version__ = "0.1.0"
