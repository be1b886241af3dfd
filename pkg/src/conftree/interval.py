"""Nonconforming bisection of an interval.

Every cell is its own subdivision patch, so the conformity-aware engine has
nothing to negotiate and must behave exactly like the classical tree
algorithm.  Used as a reference backend.
"""

from __future__ import annotations

from .tree import Arena, GeometryBackend, RefinementTree


class IntervalBackend(GeometryBackend):
    max_patch_size = 1

    def __init__(self, a: float = 0.0, b: float = 1.0):
        self.arena = Arena(self._split)
        self.roots = (self.arena.add_root((a, b)),)

    @staticmethod
    def _split(iv):
        a, b = iv
        m = 0.5 * (a + b)
        return [(a, m), (m, b)]

    def interval(self, cell: int) -> tuple[float, float]:
        return self.arena.payload[cell]

    def subdivision_patch(self, cell: int) -> tuple[int, ...]:
        return (cell,)

    def necessary_patch(self, tree: RefinementTree, cell: int) -> tuple[int, ...]:
        return (cell,)

    def is_conforming(self, tree: RefinementTree) -> bool:
        return True

    def measure(self, cell: int) -> float:
        a, b = self.arena.payload[cell]
        return b - a


def l2_constant_error_xsq(a: float, b: float) -> float:
    """Squared L2 distance of x**2 from constants on [a, b].

    With centre c and width h, x**2 - mean = 2ct + t**2 - h**2/12 on
    t in [-h/2, h/2]; the cross term is odd and integrates to zero.
    """
    h = b - a
    c = 0.5 * (a + b)
    return 4.0 * c * c * h**3 / 12.0 + h**5 / 180.0


class IntervalXsqError:
    """Local error functional for u(x) = x**2 on the interval backend."""

    def __init__(self, backend: IntervalBackend):
        self.backend = backend
        self._cache: dict[int, float] = {}

    def __call__(self, cell: int) -> float:
        e = self._cache.get(cell)
        if e is None:
            e = self._cache[cell] = l2_constant_error_xsq(*self.backend.interval(cell))
        return e
