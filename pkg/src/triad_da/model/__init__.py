"""
Helical basis, triad geometry and triad model vector fields.
"""
