"""
Sequential importance resampling particle filter for the triad twin experiment.
"""
