"""Local H1 errors and the benchmark target functions.

The local error of a triangle t is the squared H1-seminorm distance of u from
affine functions,

    err(t) = int_t |grad u|^2 - |int_t grad u|^2 / |t|,

since the best affine gradient is the mean of grad u over t.  Both integrals
come from the degree-17 triangle rule.  Targets may carry a hint about where
they are not smooth; cells near that locus get extra treatment:

* a point singularity is handled by quartering towards the point, and when the
  point is a vertex and u is homogeneous about it the geometric series of
  corner pieces is summed in closed form;
* a circular interface across which the gradient jumps is handled by
  integrating each smooth branch over its exact part of the cell.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .quadrature import QuadratureRule, conical_rule

log = logging.getLogger(__name__)

Gradient = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PointSingularity:
    point: tuple[float, float]
    homogeneity: float | None = None


@dataclass(frozen=True)
class CircleInterface:
    center: tuple[float, float]
    radius: float
    inner_gradient: Gradient
    outer_gradient: Gradient


@dataclass
class TargetFunction:
    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Gradient
    domain: str
    singular_locus: PointSingularity | CircleInterface | None = None


@dataclass
class LocalErrorResult:
    value: float
    estimated_quadrature_error: float
    converged: bool = True


# -- targets -----------------------------------------------------------------

def _polar(x):
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    theta = np.arctan2(x[..., 1], x[..., 0])
    theta = np.where(theta < 0, theta + 2 * np.pi, theta)
    return r, theta


def u1(x):
    r, theta = _polar(x)
    return r ** (2 / 3) * np.sin(2 / 3 * theta)


def grad_u1(x):
    r, theta = _polar(x)
    with np.errstate(divide="ignore"):
        s = (2 / 3) * r ** (-1 / 3)
    return np.stack([s * np.sin(-theta / 3), s * np.cos(-theta / 3)], axis=-1)


def u2(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(0.0, 1 / 9 - np.sum(x * x, axis=-1))


def _grad_u2_inner(x):
    return -2.0 * np.asarray(x, dtype=float)


def _grad_u2_outer(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def grad_u2(x):
    x = np.asarray(x, dtype=float)
    inside = np.sum(x * x, axis=-1) < 1 / 9
    return np.where(inside[..., None], -2.0 * x, 0.0)


def target_u1() -> TargetFunction:
    return TargetFunction("u1", u1, grad_u1, "lshape",
                          PointSingularity((0.0, 0.0), homogeneity=2 / 3))


def target_u2() -> TargetFunction:
    locus = CircleInterface((0.0, 0.0), 1 / 3, _grad_u2_inner, _grad_u2_outer)
    return TargetFunction("u2", u2, grad_u2, "square", locus)


def target_affine(a: float = 0.25, b: float = -1.5, c: float = 0.75,
                  domain: str = "square") -> TargetFunction:
    def value(x):
        x = np.asarray(x, dtype=float)
        return a + b * x[..., 0] + c * x[..., 1]

    def gradient(x):
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        g[..., 0] = b
        g[..., 1] = c
        return g

    return TargetFunction("affine", value, gradient, domain)


def target_xsq(domain: str = "square") -> TargetFunction:
    def value(x):
        return np.asarray(x, dtype=float)[..., 0] ** 2

    def gradient(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        g[..., 0] = 2 * x[..., 0]
        return g

    return TargetFunction("xsq", value, gradient, domain)


TARGETS: dict[str, Callable[[], TargetFunction]] = {
    "u1": target_u1,
    "u2": target_u2,
    "affine": target_affine,
    "xsq": target_xsq,
}


def register_target(name: str, factory: Callable[[], TargetFunction]) -> None:
    TARGETS[name] = factory


def get_target(name: str) -> TargetFunction:
    try:
        return TARGETS[name]()
    except KeyError:
        raise ValueError(f"unknown target {name!r}; known: {sorted(TARGETS)}") from None


# -- integration -------------------------------------------------------------

def _area(T: np.ndarray) -> float:
    d1 = T[1] - T[0]
    d2 = T[2] - T[0]
    return 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])


def _moments_many(tris: np.ndarray, grad: Gradient, rule: QuadratureRule) -> np.ndarray:
    """(A, Bx, By) for each triangle of a (k, 3, 2) stack."""
    pts = np.einsum("qi,kid->kqd", rule.nodes, tris)
    g = grad(pts)
    d1 = tris[:, 1] - tris[:, 0]
    d2 = tris[:, 2] - tris[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    w = rule.weights
    A = area * ((g * g).sum(-1) @ w)
    B = area[:, None] * np.einsum("kqd,q->kd", g, w)
    return np.column_stack([A, B])


def _moments(T: np.ndarray, grad: Gradient, rule: QuadratureRule) -> np.ndarray:
    return _moments_many(T[None], grad, rule)[0]


def _plain_error(T: np.ndarray, grad: Gradient, rule: QuadratureRule) -> float:
    """Single-rule error as a variance about the first node's gradient.

    Shifting makes constant gradients give exactly zero and avoids the
    cancellation in A - |B|^2 / area for nearly affine cells.
    """
    g = grad(rule.map(T))
    d = g - g[0]
    w = rule.weights
    mean = w @ d
    return _area(T) * float((d * d).sum(-1) @ w - mean @ mean)


def _quarter(T: np.ndarray) -> np.ndarray:
    a, b, c = T
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.array([[a, ab, ca], [ab, b, bc], [ca, bc, c], [bc, ca, ab]])


def _adaptive(T, grad, rule, tol_abs, depth, max_depth, coarse=None):
    """Quartering cubature; returns (moments, error estimate, converged)."""
    if coarse is None:
        coarse = _moments(T, grad, rule)
    kids = _quarter(T)
    km = _moments_many(kids, grad, rule)
    fine = km.sum(0)
    diff = float(np.max(np.abs(fine - coarse)))
    if diff <= tol_abs:
        return fine, diff, True
    if depth >= max_depth:
        return fine, diff, False
    total = np.zeros(3)
    est = 0.0
    ok = True
    for k in range(4):
        m, e, c = _adaptive(kids[k], grad, rule, tol_abs / 2, depth + 1, max_depth, km[k])
        total += m
        est += e
        ok &= c
    return total, est, ok


def _point_triangle_distance(p: np.ndarray, T: np.ndarray) -> float:
    a, b, c = T
    v0, v1, v2 = b - a, c - a, p - a
    den = v0[0] * v1[1] - v0[1] * v1[0]
    l1 = (v2[0] * v1[1] - v2[1] * v1[0]) / den
    l2 = (v0[0] * v2[1] - v0[1] * v2[0]) / den
    if l1 >= 0 and l2 >= 0 and l1 + l2 <= 1:
        return 0.0
    best = math.inf
    for s, e in ((a, b), (b, c), (c, a)):
        d = e - s
        t = min(1.0, max(0.0, float(np.dot(p - s, d) / np.dot(d, d))))
        best = min(best, float(np.linalg.norm(p - (s + t * d))))
    return best


def _diameter(T: np.ndarray) -> float:
    return max(float(np.linalg.norm(T[i] - T[j])) for i, j in ((0, 1), (1, 2), (0, 2)))


def _point_moments(T, grad, rule, locus: PointSingularity, tol, max_depth):
    p = np.asarray(locus.point, dtype=float)
    dist = _point_triangle_distance(p, T)
    diam = _diameter(T)
    if dist >= diam:
        return _moments(T, grad, rule), 0.0, True
    corner = [k for k in range(3) if np.array_equal(T[k], p)]
    if corner and locus.homogeneity is not None:
        # corner piece is the whole cell scaled by 1/2 about p
        k = corner[0]
        T = np.roll(T, -k, axis=0)
        kids = _quarter(T)[1:]
        parts = _moments_many(kids, grad, rule)
        total = np.zeros(3)
        est = 0.0
        ok = True
        scale = float(parts[:, 0].sum())
        for kid, coarse in zip(kids, parts):
            m, e, c = _adaptive(kid, grad, rule, tol * scale, 1, max_depth, coarse)
            total += m
            est += e
            ok &= c
        alpha = locus.homogeneity
        qa = 2.0 ** (-2 * alpha)
        qb = 2.0 ** (-(alpha + 1))
        total[0] /= 1.0 - qa
        total[1:] /= 1.0 - qb
        return total, est / (1.0 - qa), ok
    coarse = _moments(T, grad, rule)
    return _adaptive(T, grad, rule, tol * abs(coarse[0]), 0, max_depth, coarse)


_GL_T = roots_legendre(24)
_GL_S = roots_legendre(12)
_GL_T_LOW = roots_legendre(16)


def _disk_pieces(T: np.ndarray, c: np.ndarray, R: float):
    """Boundary of (triangle ∩ disk), counter-clockwise, as segments and arcs."""
    d1 = T[1] - T[0]
    d2 = T[2] - T[0]
    if d1[0] * d2[1] - d1[1] * d2[0] < 0:
        T = T[[0, 2, 1]]
    segs = []
    for i in range(3):
        P, Q = T[i], T[(i + 1) % 3]
        d = Q - P
        f = P - c
        a = float(d @ d)
        b = 2.0 * float(f @ d)
        c0 = float(f @ f) - R * R
        disc = b * b - 4 * a * c0
        if disc <= 0:
            continue
        sq = math.sqrt(disc)
        t1 = (-b - sq) / (2 * a)
        t2 = (-b + sq) / (2 * a)
        lo, hi = max(0.0, t1), min(1.0, t2)
        if hi > lo:
            segs.append((P + lo * d, P + hi * d))
    if not segs:
        if _point_triangle_distance(c, T) == 0.0 and all(
                _point_segment_distance(c, T[i], T[(i + 1) % 3]) >= R for i in range(3)):
            return [("arc", 0.0, 2 * math.pi)]
        return []
    pieces = []
    scale = max(R, 1e-300)
    for i, (P, Q) in enumerate(segs):
        pieces.append(("seg", P, Q))
        nP = segs[(i + 1) % len(segs)][0]
        if np.linalg.norm(nP - Q) > 1e-14 * scale:
            a0 = math.atan2(Q[1] - c[1], Q[0] - c[0])
            a1 = math.atan2(nP[1] - c[1], nP[0] - c[0])
            span = (a1 - a0) % (2 * math.pi)
            pieces.append(("arc", a0, a0 + span))
    return pieces


def _point_segment_distance(p, s, e):
    d = e - s
    t = min(1.0, max(0.0, float(np.dot(p - s, d) / np.dot(d, d))))
    return float(np.linalg.norm(p - (s + t * d)))


def _region_moments(pieces, c, R, grad, gl_t=_GL_T):
    """Integrals of (|g|^2, g) over a region from its boundary.

    Uses div(F) = f for F(x) = (x - c) * int_0^1 s f(c + s (x - c)) ds, so the
    area integral becomes a boundary integral of G(x) (x - c).n.
    """
    xt, wt = gl_t
    xs, ws = _GL_S
    s = 0.5 * (xs + 1.0)
    ws = 0.5 * ws
    total = np.zeros(3)
    for piece in pieces:
        if piece[0] == "seg":
            _, P, Q = piece
            d = Q - P
            t = 0.5 * (xt + 1.0)
            x = P + t[:, None] * d
            h = (P[0] - c[0]) * d[1] - (P[1] - c[1]) * d[0]
            w = 0.5 * wt * h
        else:
            _, a0, a1 = piece
            phi = 0.5 * (a1 - a0) * xt + 0.5 * (a1 + a0)
            x = c + R * np.column_stack([np.cos(phi), np.sin(phi)])
            w = 0.5 * (a1 - a0) * wt * R * R
        inner = c + s[:, None, None] * (x[None, :, :] - c)
        g = grad(inner)
        f = np.concatenate([(g * g).sum(-1, keepdims=True), g], axis=-1)
        G = np.einsum("s,stk->tk", ws * s, f)
        total += w @ G
    return total


def _circle_moments(T, rule, locus: CircleInterface):
    c = np.asarray(locus.center, dtype=float)
    R = float(locus.radius)
    dist = _point_triangle_distance(c, T)
    if dist >= R:
        return _moments(T, locus.outer_gradient, rule), 0.0, True
    if all(np.linalg.norm(v - c) <= R for v in T):
        return _moments(T, locus.inner_gradient, rule), 0.0, True
    pieces = _disk_pieces(T, c, R)
    inner = _region_moments(pieces, c, R, locus.inner_gradient)
    inner_low = _region_moments(pieces, c, R, locus.inner_gradient, _GL_T_LOW)
    outer_in = _region_moments(pieces, c, R, locus.outer_gradient)
    outer = _moments(T, locus.outer_gradient, rule) - outer_in
    est = float(np.max(np.abs(inner - inner_low)))
    return inner + outer, est, True


def local_error_h1(u: TargetFunction, verts, tol: float = 1e-9, adaptive: bool = True,
                   max_depth: int = 12, rule: QuadratureRule | None = None) -> LocalErrorResult:
    """Squared H1-seminorm best affine approximation error of ``u`` on a triangle."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    T = np.asarray(verts, dtype=float).reshape(3, 2)
    rule = rule or conical_rule(17)
    locus = u.singular_locus if adaptive else None
    if isinstance(locus, PointSingularity):
        mom, est, ok = _point_moments(T, u.gradient, rule, locus, tol, max_depth)
    elif isinstance(locus, CircleInterface):
        mom, est, ok = _circle_moments(T, rule, locus)
    else:
        return LocalErrorResult(max(_plain_error(T, u.gradient, rule), 0.0), 0.0, True)
    A = float(mom[0])
    area = _area(T)
    e = A - (mom[1] ** 2 + mom[2] ** 2) / area
    if e < 0:
        if e < -1e-12 * abs(A):
            log.warning("negative local error %.3e clamped to zero (A=%.3e)", e, A)
        e = 0.0
    return LocalErrorResult(float(e), float(est), bool(ok))


@dataclass
class H1Error:
    """Memoized local error functional on an NVB backend."""

    target: TargetFunction
    backend: object
    tol: float = 1e-9
    adaptive: bool = True
    max_depth: int = 12
    _cache: dict = field(default_factory=dict, repr=False)

    def result(self, cell: int) -> LocalErrorResult:
        r = self._cache.get(cell)
        if r is None:
            r = local_error_h1(self.target, self.backend.coords(cell), self.tol,
                               self.adaptive, self.max_depth)
            self._cache[cell] = r
        return r

    def __call__(self, cell: int) -> float:
        return self.result(cell).value
