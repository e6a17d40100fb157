"""
Helical triad models of the 3D Euler equations (triad_da)
Deterministic and stochastic triad dynamics, ensemble statistics,
particle filtering and noise calibration.
"""

__version__ = "0.1.0"
