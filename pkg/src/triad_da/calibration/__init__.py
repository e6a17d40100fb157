"""
Noise-amplitude calibration by CRPS and rank histograms.
"""
