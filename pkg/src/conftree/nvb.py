"""Newest vertex bisection of triangles with edge-to-edge meshes.

Vertices live on dyadic lattices, stored as ``(X, Y, e)`` meaning
``(X / 2**e, Y / 2**e)`` in lowest terms, so midpoints and all incidence tests
are exact.  A triangle ``(a0, a1, a2)`` has newest vertex ``a1`` and
refinement edge ``a0-a2``; its children are ``(a0, a, a1)`` and
``(a2, a, a1)`` with ``a`` the midpoint of the refinement edge.

Interior cells are subdivided together with their refinement-edge mate, so
the maximal patch size is 2.
"""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction

from .tree import Arena, ConformityMonitor, GeometryBackend, RefinementTree

Dyadic = tuple[int, int, int]
EdgeKey = tuple[int, int]


class LabelingError(ValueError):
    """No vertex ordering satisfies the compatibility condition."""


class GeometryError(RuntimeError):
    """Internal inconsistency in the master-tree geometry."""


# -- dyadic arithmetic -------------------------------------------------------

def _normalize(X: int, Y: int, e: int) -> Dyadic:
    while e > 0 and not (X & 1) and not (Y & 1):
        X >>= 1
        Y >>= 1
        e -= 1
    return X, Y, e


def to_dyadic(x, y) -> Dyadic:
    fx, fy = Fraction(x), Fraction(y)
    den = max(fx.denominator, fy.denominator)
    e = den.bit_length() - 1
    if (1 << e) != den or fx.denominator & (fx.denominator - 1) or fy.denominator & (fy.denominator - 1):
        raise ValueError(f"coordinates ({x}, {y}) are not dyadic")
    return _normalize(int(fx * (1 << e)), int(fy * (1 << e)), e)


def dyadic_midpoint(p: Dyadic, q: Dyadic) -> Dyadic:
    E = max(p[2], q[2])
    X = (p[0] << (E - p[2])) + (q[0] << (E - q[2]))
    Y = (p[1] << (E - p[2])) + (q[1] << (E - q[2]))
    return _normalize(X, Y, E + 1)


def dyadic_to_float(p: Dyadic) -> tuple[float, float]:
    X, Y, e = p
    d = 1 << e
    return X / d, Y / d


def _lift(points: tuple[Dyadic, ...]) -> list[tuple[int, int]]:
    E = max(p[2] for p in points)
    return [(p[0] << (E - p[2]), p[1] << (E - p[2])) for p in points]


def orient(p: Dyadic, q: Dyadic, r: Dyadic) -> int:
    """Sign of the (exact) cross product (q - p) x (r - p)."""
    (px, py), (qx, qy), (rx, ry) = _lift((p, q, r))
    c = (qx - px) * (ry - py) - (qy - py) * (rx - px)
    return (c > 0) - (c < 0)


def twice_area(p: Dyadic, q: Dyadic, r: Dyadic) -> Fraction:
    E = max(p[2], q[2], r[2])
    (px, py), (qx, qy), (rx, ry) = _lift((p, q, r))
    return Fraction(abs((qx - px) * (ry - py) - (qy - py) * (rx - px)), 1 << (2 * E))


def segment_contains(A: Dyadic, B: Dyadic, p: Dyadic, q: Dyadic) -> bool:
    """Whether segment p-q lies inside segment A-B."""
    if orient(A, B, p) or orient(A, B, q):
        return False
    (ax, ay), (bx, by), (px, py), (qx, qy) = _lift((A, B, p, q))
    L = (bx - ax) ** 2 + (by - ay) ** 2
    for x, y in ((px, py), (qx, qy)):
        t = (x - ax) * (bx - ax) + (y - ay) * (by - ay)
        if t < 0 or t > L:
            return False
    return True


def edge_key(u: int, v: int) -> EdgeKey:
    return (u, v) if u < v else (v, u)


# -- initial meshes ----------------------------------------------------------

@dataclass
class InitialMesh:
    """Labeled initial triangulation.

    ``triangles[k] = (i0, i1, i2)`` indexes ``vertices``; ``i1`` is the newest
    vertex, so ``i0-i2`` is the refinement edge.
    """

    vertices: list[tuple[Fraction, Fraction]]
    triangles: list[tuple[int, int, int]]
    name: str = ""

    def area(self) -> Fraction:
        total = Fraction(0)
        for tri in self.triangles:
            p, q, r = (to_dyadic(*self.vertices[i]) for i in tri)
            total += twice_area(p, q, r) / 2
        return total


def _edge_owners(triangles) -> dict[EdgeKey, list[int]]:
    owners = defaultdict(list)
    for k, (a, b, c) in enumerate(triangles):
        for u, v in ((a, b), (b, c), (a, c)):
            owners[edge_key(u, v)].append(k)
    return owners


def refinement_edge(tri: tuple[int, int, int]) -> EdgeKey:
    return edge_key(tri[0], tri[2])


def check_compatible(mesh: InitialMesh) -> bool:
    """Every shared edge is the refinement edge of both neighbours or of neither."""
    for e, ks in _edge_owners(mesh.triangles).items():
        if len(ks) == 2:
            flags = [refinement_edge(mesh.triangles[k]) == e for k in ks]
            if flags[0] != flags[1]:
                return False
        elif len(ks) > 2:
            return False
    return True


def _rotations(tri):
    a, b, c = tri
    # newest vertex in the middle slot
    return [(b, a, c), (a, b, c), (a, c, b)]


def compatible_initial_labeling(vertices, triangles, name: str = "") -> InitialMesh:
    """Assign newest vertices so that shared edges are refinement edges of both or neither.

    Backtracking search in triangle order, trying for each triangle the three
    choices of newest vertex in a fixed order, so the result is deterministic.
    """
    triangles = [tuple(t) for t in triangles]
    owners = _edge_owners(triangles)
    neighbours = [[] for _ in triangles]
    for e, ks in owners.items():
        if len(ks) > 2:
            raise LabelingError(f"edge {e} is shared by {len(ks)} triangles")
        if len(ks) == 2:
            a, b = ks
            neighbours[a].append((b, e))
            neighbours[b].append((a, e))

    choice: list[tuple | None] = [None] * len(triangles)

    def consistent(k):
        mine = refinement_edge(choice[k])
        for j, e in neighbours[k]:
            if choice[j] is not None and (mine == e) != (refinement_edge(choice[j]) == e):
                return False
        return True

    def search(k):
        if k == len(triangles):
            return True
        for cand in _rotations(triangles[k]):
            choice[k] = cand
            if consistent(k) and search(k + 1):
                return True
        choice[k] = None
        return False

    if not search(0):
        raise LabelingError(
            f"no compatible labeling for {len(triangles)} triangles "
            f"({sum(len(n) for n in neighbours) // 2} interior edges)")
    verts = [(Fraction(x), Fraction(y)) for x, y in vertices]
    return InitialMesh(verts, [tuple(c) for c in choice], name)


def build_domain_mesh(domain: str) -> InitialMesh:
    """Initial meshes for the two benchmark domains.

    ``"square"``: (-1, 1)^2 cut by both diagonals, newest vertex at the centre.
    ``"lshape"``: (-1/2, 1/2)^2 minus [0, 1/2] x [-1/2, 0], each of the three
    squares cut by its diagonal through the re-entrant corner, which is the
    refinement edge of both halves.
    """
    F = Fraction
    if domain in ("square", "omega2", "u2"):
        V = [(F(-1), F(-1)), (F(1), F(-1)), (F(1), F(1)), (F(-1), F(1)), (F(0), F(0))]
        T = [(0, 4, 1), (1, 4, 2), (2, 4, 3), (3, 4, 0)]
        return InitialMesh(V, T, "square")
    if domain in ("lshape", "omega1", "u1"):
        h = F(1, 2)
        V = [(F(0), F(0)),    # 0 re-entrant corner
             (h, F(0)),       # 1
             (h, h),          # 2
             (F(0), h),       # 3
             (-h, h),         # 4
             (-h, F(0)),      # 5
             (-h, -h),        # 6
             (F(0), -h)]      # 7
        T = [(0, 1, 2), (0, 3, 2),
             (0, 3, 4), (0, 5, 4),
             (0, 5, 6), (0, 7, 6)]
        return InitialMesh(V, T, "lshape")
    raise ValueError(f"unknown domain {domain!r}")


# -- backend -----------------------------------------------------------------

class NVBBackend(GeometryBackend):
    """Master forest of newest-vertex bisection over a labeled initial mesh.

    Cell payloads are ``(v0, v1, v2, bnd)`` where ``bnd`` flags which of the
    edges ``v0-v1``, ``v1-v2``, ``v0-v2`` lie on the domain boundary.
    """

    max_patch_size = 2

    def __init__(self, mesh: InitialMesh):
        if not check_compatible(mesh):
            raise LabelingError("initial mesh labeling is not compatible")
        self.mesh = mesh
        self._vid: dict[Dyadic, int] = {}
        self.vcoord: list[Dyadic] = []
        self.vxy: list[tuple[float, float]] = []
        self._by_edge: dict[EdgeKey, list[int]] = defaultdict(list)
        self._by_refedge: dict[EdgeKey, list[int]] = defaultdict(list)
        self.edge_on_boundary: dict[EdgeKey, bool] = {}
        self._mate: dict[int, int | None] = {}
        self.arena = Arena(self._split, self._register)

        ids = [self._vertex(to_dyadic(x, y)) for x, y in mesh.vertices]
        owners = _edge_owners(mesh.triangles)
        roots = []
        for a, b, c in mesh.triangles:
            va, vb, vc = ids[a], ids[b], ids[c]
            bnd = tuple(len(owners[edge_key(u, v)]) == 1 for u, v in ((a, b), (b, c), (a, c)))
            p, q, r = (self.vcoord[v] for v in (va, vb, vc))
            if orient(p, q, r) == 0:
                raise GeometryError(f"degenerate initial triangle {(a, b, c)}")
            roots.append(self.arena.add_root((va, vb, vc, bnd)))
        self.roots = tuple(roots)

    # vertices
    def _vertex(self, p: Dyadic) -> int:
        v = self._vid.get(p)
        if v is None:
            v = self._vid[p] = len(self.vcoord)
            self.vcoord.append(p)
            self.vxy.append(dyadic_to_float(p))
        return v

    def find_vertex(self, p: Dyadic) -> int | None:
        return self._vid.get(p)

    def midpoint_vertex(self, u: int, v: int) -> int | None:
        """Id of the midpoint of u-v if that vertex was ever created."""
        return self._vid.get(dyadic_midpoint(self.vcoord[u], self.vcoord[v]))

    # cells
    def _split(self, payload):
        a0, a1, a2, b = payload
        a = self._vertex(dyadic_midpoint(self.vcoord[a0], self.vcoord[a2]))
        return [(a0, a, a1, (b[2], False, b[0])),
                (a2, a, a1, (b[2], False, b[1]))]

    def _register(self, cell: int) -> None:
        v0, v1, v2, b = self.arena.payload[cell]
        for (u, v), flag in zip(((v0, v1), (v1, v2), (v0, v2)), b):
            k = edge_key(u, v)
            self._by_edge[k].append(cell)
            self.edge_on_boundary[k] = flag
        self._by_refedge[edge_key(v0, v2)].append(cell)

    def triangle(self, cell: int) -> tuple[int, int, int]:
        return self.arena.payload[cell][:3]

    def edges(self, cell: int) -> tuple[EdgeKey, EdgeKey, EdgeKey]:
        v0, v1, v2, _ = self.arena.payload[cell]
        return edge_key(v0, v1), edge_key(v1, v2), edge_key(v0, v2)

    def refinement_edge(self, cell: int) -> EdgeKey:
        v0, _, v2, _ = self.arena.payload[cell]
        return edge_key(v0, v2)

    def coords(self, cell: int) -> list[tuple[float, float]]:
        return [self.vxy[v] for v in self.triangle(cell)]

    def measure(self, cell: int) -> float:
        p, q, r = (self.vcoord[v] for v in self.triangle(cell))
        return float(twice_area(p, q, r) / 2)

    # patches
    def _third(self, cell: int, e: EdgeKey) -> int:
        for v in self.triangle(cell):
            if v not in e:
                return v
        raise GeometryError(f"edge {e} is not an edge of cell {cell}")

    def _opposite_sides(self, e: EdgeKey, v: int, w: int) -> bool:
        p, q = self.vcoord[e[0]], self.vcoord[e[1]]
        return orient(p, q, self.vcoord[v]) * orient(p, q, self.vcoord[w]) < 0

    def mate(self, cell: int) -> int | None:
        """The other cell with the same refinement edge, or None on the boundary."""
        if cell in self._mate:
            return self._mate[cell]
        v0, v1, v2, b = self.arena.payload[cell]
        if b[2]:
            self._mate[cell] = None
            return None
        e = edge_key(v0, v2)
        m = self._search_mate(cell, e, v1)
        self._mate[cell] = m
        self._mate[m] = cell
        return m

    def _search_mate(self, cell: int, e: EdgeKey, apex: int) -> int:
        for q in self._by_refedge[e]:
            if q != cell:
                return q
        # deepest materialized cell across e having e as a full edge
        start = None
        for q in self._by_edge[e]:
            if self._opposite_sides(e, apex, self._third(q, e)):
                if start is None or self.arena.generation[q] > self.arena.generation[start]:
                    start = q
        if start is None:
            start = self._descend_to_full_edge(e, apex)
        q = start
        while self.refinement_edge(q) != e:
            nxt = [k for k in self.arena.expand(q) if e in self.edges(k)]
            if len(nxt) != 1:
                raise GeometryError(f"edge {e} lost while descending from cell {q}")
            q = nxt[0]
        return q

    def _descend_to_full_edge(self, e: EdgeKey, apex: int) -> int:
        """Walk down from the initial mesh to the coarsest cell across e owning e entirely."""
        p, r = self.vcoord[e[0]], self.vcoord[e[1]]
        holder = None
        for root in self.roots:
            for u, v in self.edges(root):
                if segment_contains(self.vcoord[u], self.vcoord[v], p, r) and \
                        self._opposite_sides(e, apex, self._third(root, (u, v))):
                    holder = root
        if holder is None:
            raise GeometryError(f"no cell across interior edge {e}")
        q = holder
        while e not in self.edges(q):
            nxt = [k for k in self.arena.expand(q)
                   if any(segment_contains(self.vcoord[u], self.vcoord[v], p, r)
                          for u, v in self.edges(k))]
            if len(nxt) != 1:
                raise GeometryError(f"edge {e} straddles a bisection point below cell {q}")
            q = nxt[0]
        return q

    def subdivision_patch(self, cell: int) -> tuple[int, ...]:
        m = self.mate(cell)
        if m is None:
            return (cell,)
        return (cell, m) if cell < m else (m, cell)

    def necessary_patch(self, tree: RefinementTree, cell: int) -> tuple[int, ...]:
        """Follow refinement-edge neighbours towards coarser cells.

        Starting from ``cell``, if its patch is not made of leaves then the
        mate is missing from the tree and the leaf covering it (an ancestor of
        the mate) has to be dealt with first.
        """
        leaves = tree.leaf_set
        c = cell
        while True:
            s = self.subdivision_patch(c)
            missing = [k for k in s if k not in leaves]
            if not missing:
                return s
            a = missing[0]
            if a in tree.nodes:
                raise GeometryError(f"mate {a} of leaf {c} is internal: tree is not conforming")
            while a not in tree.nodes:
                a = self.arena.parent[a]
                if a is None:
                    raise GeometryError(f"mate of cell {c} has no ancestor in the tree")
            if a not in leaves:
                raise GeometryError(f"cell {a} covering the mate of {c} is internal")
            c = a

    # conformity
    def is_conforming(self, tree: RefinementTree) -> bool:
        counts = Counter()
        for c in tree.leaf_set:
            counts.update(self.edges(c))
        for k, n in counts.items():
            if n != (1 if self.edge_on_boundary[k] else 2):
                return False
        return True

    def conformity_monitor(self, tree: RefinementTree) -> EdgeCountMonitor:
        return EdgeCountMonitor(self, tree)

    def hanging_leaves(self, tree: RefinementTree) -> list[int]:
        """Leaves with a leaf vertex at the midpoint of one of their edges."""
        verts = Counter()
        for c in tree.leaf_set:
            verts.update(self.triangle(c))
        return sorted(c for c in tree.leaf_set if self._needs_split(c, verts))

    def _needs_split(self, cell: int, leaf_vertices: Counter) -> bool:
        for u, v in self.edges(cell):
            m = self.midpoint_vertex(u, v)
            if m is not None and leaf_vertices[m] > 0:
                return True
        return False

    def complete(self, tree: RefinementTree) -> RefinementTree:
        """Smallest conforming tree containing ``tree``.

        A leaf with a leaf vertex at the midpoint of one of its edges must be
        split in every conforming superset, so splitting exactly those leaves
        until none is left yields the minimal completion.  Splitting a cell
        only adds the midpoint of its refinement edge, so the only other leaves
        that can become affected are those owning that same edge.
        """
        out = tree.copy()
        verts = Counter()
        for c in out.leaf_set:
            verts.update(self.triangle(c))
        heap = sorted(out.leaf_set)
        queued = set(heap)
        changed = False
        while heap:
            c = heapq.heappop(heap)
            queued.discard(c)
            if c not in out.leaf_set or not self._needs_split(c, verts):
                continue
            changed = True
            e = self.refinement_edge(c)
            verts.subtract(self.triangle(c))
            kids = out.refine_cell(c)
            for k in kids:
                verts.update(self.triangle(k))
            for k in list(kids) + [q for q in self._by_edge[e] if q in out.leaf_set]:
                if k not in queued:
                    queued.add(k)
                    heapq.heappush(heap, k)
        if changed or not out.patch_history and out.nodes != set(out.roots):
            out.rebuild_patch_history()
        return out


class EdgeCountMonitor(ConformityMonitor):
    """Incremental edge-matching check: O(1) work per created or removed leaf."""

    def __init__(self, backend: NVBBackend, tree: RefinementTree):
        super().__init__(backend, tree)
        self.counts: Counter = Counter()
        self.bad: set[EdgeKey] = set()
        self.update((), tree.leaf_set)

    def _touch(self, k: EdgeKey, delta: int) -> None:
        n = self.counts[k] + delta
        if n:
            self.counts[k] = n
        else:
            del self.counts[k]
        if n == 0 or n == (1 if self.backend.edge_on_boundary[k] else 2):
            self.bad.discard(k)
        else:
            self.bad.add(k)

    def update(self, removed, added) -> None:
        for c in removed:
            for k in self.backend.edges(c):
                self._touch(k, -1)
        for c in added:
            for k in self.backend.edges(c):
                self._touch(k, +1)

    @property
    def conforming(self) -> bool:
        return not self.bad

