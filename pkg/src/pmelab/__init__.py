"""Numerical laboratory for boundary behaviour of the degenerate porous
medium equation u_t = lap(u^m), m >= 1: Dirichlet solves on cylinders and
monotone unions, closed-form barrier certification, variational capacity and
the elliptic Wiener criterion, Perron-style boundary probes, and the
level-set iteration behind the supremum estimate.
"""

__version__ = "0.1.0"
