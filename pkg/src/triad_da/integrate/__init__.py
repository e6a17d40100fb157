"""
Stochastic and deterministic time integration of the triad.
"""
