"""Nonlinear CCA identifiability laboratory."""
