"""
Command-line interface, configuration and output writers.
"""
