"""Desk-scale laboratory for Z_N form fields on periodic cubical lattices.

Exact quantum/classical cross-checks, defect-gas resummations, convergence
bounds, weight-level dualities, and plaquette-cluster Monte Carlo.
"""

__version__ = "0.1.0"
