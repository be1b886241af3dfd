"""Triangle quadrature.

The rule is a collapsed (conical) product of Gauss-Jacobi and Gauss-Legendre
points: with n points per direction it integrates every polynomial of total
degree <= 2n - 1 exactly, all weights are positive and all nodes are interior.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric nodes (rows sum to 1) and weights summing to 1."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def ref_points(self) -> np.ndarray:
        """Nodes on the reference triangle (0,0), (1,0), (0,1)."""
        return self.nodes[:, 1:]

    def map(self, verts: np.ndarray) -> np.ndarray:
        """Physical nodes for a triangle given as a (3, 2) array."""
        return self.nodes @ verts


@lru_cache(maxsize=None)
def conical_rule(degree: int = 17) -> QuadratureRule:
    n = (degree + 2) // 2
    # (1 - x) weight absorbs the Jacobian of the collapse u -> (u, v (1 - u))
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    u = 0.5 * (1.0 + xj)
    wu = wj / 4.0
    v = 0.5 * (1.0 + xl)
    wv = wl / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    w = np.outer(wu, wv).ravel()
    w = w / w.sum()
    nodes = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(nodes, w, 2 * n - 1)


def monomial_exact(i: int, j: int) -> float:
    """Integral of x**i y**j over the reference triangle."""
    return factorial(i) * factorial(j) / factorial(i + j + 2)


@dataclass
class RuleReport:
    degree: int
    max_rel_error: float
    worst_monomial: tuple[int, int]
    passed: bool


def validate_rule(rule: QuadratureRule, degree: int = 17, tol: float = 1e-13) -> RuleReport:
    """Integrate every monomial of total degree <= ``degree`` on the reference triangle."""
    x, y = rule.ref_points.T
    worst, where = 0.0, (0, 0)
    for d in range(degree + 1):
        for i in range(d + 1):
            j = d - i
            approx = 0.5 * np.dot(rule.weights, x**i * y**j)
            exact = monomial_exact(i, j)
            rel = abs(approx - exact) / exact
            if rel > worst:
                worst, where = rel, (i, j)
    return RuleReport(degree, worst, where, worst <= tol)
