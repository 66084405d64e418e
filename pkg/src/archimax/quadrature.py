"""Cached Gauss-Legendre rules on (0, 1)."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def gauss_legendre_01(n):
    """Nodes and weights of the n-point Gauss-Legendre rule mapped to (0, 1).

    Returns a pair of read-only float arrays of shape (n,).
    """
    x, w = np.polynomial.legendre.leggauss(int(n))
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights
