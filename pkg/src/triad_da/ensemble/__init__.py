"""
Particle ensembles: initialisation, propagation and moment statistics.
"""
