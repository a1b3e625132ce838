"""Quadrature rules on the reference triangle and the unit interval.

Triangle rules use collapsed (Duffy) coordinates with a Gauss-Jacobi
rule absorbing the collapse Jacobian, so exactness up to the requested
polynomial degree is guaranteed by construction and all weights are
positive.  Weights are stated in reference measure: they sum to 1/2 on
the triangle and to 1 on the interval.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = ["QuadratureRule", "triangle_rule", "interval_rule"]


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray       # (Q, 2) on the triangle, (Q,) on [0, 1]
    weights: np.ndarray      # positive, summing to the reference measure
    exactness_degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self):
        return self.weights.shape[0]


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Rule on {x, y >= 0, x + y <= 1} exact for total degree <= degree."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    p = (degree + 2) // 2  # 2p - 1 >= degree
    xu, wu = roots_legendre(p)
    xv, wv = roots_jacobi(p, 1.0, 0.0)
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    wu = 0.5 * wu
    wv = 0.25 * wv  # includes the (1 - v) collapse factor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = uu * (1.0 - vv)
    y = vv
    w = np.outer(wu, wv)
    pts = np.column_stack([x.ravel(), y.ravel()])
    return QuadratureRule(pts, w.ravel(), 2 * p - 1)


@lru_cache(maxsize=None)
def interval_rule(npoints):
    """Gauss-Legendre rule on [0, 1] with the given number of points."""
    if npoints < 1:
        raise ValueError("need at least one point")
    x, w = roots_legendre(npoints)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, 2 * npoints - 1)
