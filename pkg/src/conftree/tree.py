"""Geometry-agnostic master-tree arena and refinement trees.

The master tree is infinite, so cells are materialized lazily in an
:class:`Arena`.  Cell ids are dense integers handed out in creation order;
every tie in the algorithms is broken by the smallest id, which makes runs
reproducible.

A :class:`RefinementTree` is a finite, full subtree of the master forest whose
roots are the cells of the initial mesh.  It only grows: subdividing a patch
replaces the patch cells by all of their children.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Callable, Iterable, Sequence
from typing import Any


class PatchError(ValueError):
    """A subdivision patch is not contained in the current leaves."""


class Arena:
    """Lazily expanded storage for the cells of a master forest.

    ``split`` maps a cell payload to the payloads of its children.  It is only
    ever called once per cell.
    """

    def __init__(self, split: Callable[[Any], Sequence[Any]],
                 on_create: Callable[[int], None] | None = None):
        self._split = split
        self._on_create = on_create
        self.parent: list[int | None] = []
        self.children: list[tuple[int, ...] | None] = []
        self.generation: list[int] = []
        self.payload: list[Any] = []

    def __len__(self) -> int:
        return len(self.parent)

    def _new(self, payload, parent, generation) -> int:
        cid = len(self.parent)
        self.parent.append(parent)
        self.children.append(None)
        self.generation.append(generation)
        self.payload.append(payload)
        if self._on_create is not None:
            self._on_create(cid)
        return cid

    def add_root(self, payload) -> int:
        return self._new(payload, None, 0)

    def expand(self, cell: int) -> tuple[int, ...]:
        """Return the children of ``cell``, creating them on first use."""
        kids = self.children[cell]
        if kids is not None:
            return kids
        payloads = self._split(self.payload[cell])
        if len(payloads) < 2:
            raise RuntimeError(f"backend produced {len(payloads)} children for cell {cell}")
        gen = self.generation[cell] + 1
        kids = tuple(self._new(p, cell, gen) for p in payloads)
        self.children[cell] = kids
        return kids

    def is_expanded(self, cell: int) -> bool:
        return self.children[cell] is not None

    def ancestors(self, cell: int) -> list[int]:
        out = []
        p = self.parent[cell]
        while p is not None:
            out.append(p)
            p = self.parent[p]
        return out


class GeometryBackend(ABC):
    """Contract between the greedy engines and a concrete cell geometry.

    Subclasses own an :class:`Arena` and know how cells split, which cells
    form a subdivision patch, and what a conforming mesh is.
    """

    max_patch_size: int = 1
    arena: Arena
    roots: tuple[int, ...]

    def children_of(self, cell: int) -> tuple[int, ...]:
        return self.arena.expand(cell)

    def parent_of(self, cell: int) -> int | None:
        return self.arena.parent[cell]

    def generation(self, cell: int) -> int:
        return self.arena.generation[cell]

    @abstractmethod
    def subdivision_patch(self, cell: int) -> tuple[int, ...]:
        """The unique minimal patch containing ``cell``, sorted by id."""

    @abstractmethod
    def necessary_patch(self, tree: RefinementTree, cell: int) -> tuple[int, ...]:
        """A patch inside ``tree``'s leaves that must be subdivided before ``cell``."""

    @abstractmethod
    def is_conforming(self, tree: RefinementTree) -> bool:
        ...

    @abstractmethod
    def measure(self, cell: int) -> float:
        """Length/area of a cell, used for partition checks."""

    def conformity_monitor(self, tree: RefinementTree) -> ConformityMonitor:
        return ConformityMonitor(self, tree)

    def initial_tree(self) -> RefinementTree:
        return RefinementTree(self)


class ConformityMonitor:
    """Tracks conformity across subdivisions.

    The default just rescans the whole tree; backends with cheaper incremental
    bookkeeping override :meth:`GeometryBackend.conformity_monitor`.
    """

    def __init__(self, backend: GeometryBackend, tree: RefinementTree):
        self.backend = backend
        self.tree = tree

    def update(self, removed: Iterable[int], added: Iterable[int]) -> None:
        pass

    @property
    def conforming(self) -> bool:
        return self.backend.is_conforming(self.tree)


class RefinementTree:
    """A finite full subtree of the master forest, rooted at the initial cells.

    ``patch_history`` is the source of truth for the complexity ``|T|``; the
    initial mesh itself has complexity zero.
    """

    def __init__(self, backend: GeometryBackend):
        self.backend = backend
        self.roots: tuple[int, ...] = tuple(backend.roots)
        self.nodes: set[int] = set(self.roots)
        self.leaf_set: set[int] = set(self.roots)
        self.patch_history: list[tuple[int, ...]] = []

    @property
    def root(self) -> int:
        if len(self.roots) != 1:
            raise AttributeError("tree has several roots; use .roots")
        return self.roots[0]

    @property
    def complexity(self) -> int:
        return len(self.patch_history)

    def leaves(self) -> list[int]:
        return sorted(self.leaf_set)

    def n_leaves(self) -> int:
        return len(self.leaf_set)

    def internal_nodes(self) -> list[int]:
        return sorted(self.nodes - self.leaf_set)

    def copy(self) -> RefinementTree:
        other = RefinementTree.__new__(RefinementTree)
        other.backend = self.backend
        other.roots = self.roots
        other.nodes = set(self.nodes)
        other.leaf_set = set(self.leaf_set)
        other.patch_history = list(self.patch_history)
        return other

    def subdivide(self, patch: Iterable[int]) -> list[int]:
        """Replace every cell of ``patch`` by its children; return the new leaves."""
        patch = tuple(sorted(patch))
        if not patch:
            raise PatchError("empty patch")
        missing = [c for c in patch if c not in self.leaf_set]
        if missing:
            raise PatchError(f"cells {missing} are not leaves of the tree")
        born = self._split_cells(patch)
        self.patch_history.append(patch)
        return born

    def _split_cells(self, cells: Sequence[int]) -> list[int]:
        born = []
        for c in cells:
            kids = self.backend.children_of(c)
            self.leaf_set.discard(c)
            self.leaf_set.update(kids)
            self.nodes.update(kids)
            born.extend(kids)
        return born

    def refine_cell(self, cell: int) -> list[int]:
        """Split a single leaf without patch bookkeeping.

        Used to build general (possibly nonconforming) trees; the complexity of
        such trees is meaningless until :meth:`rebuild_patch_history` is called
        on a conforming result.
        """
        if cell not in self.leaf_set:
            raise PatchError(f"cell {cell} is not a leaf")
        return self._split_cells((cell,))

    @classmethod
    def from_nodes(cls, backend: GeometryBackend, nodes: Iterable[int]) -> RefinementTree:
        """Build a tree from a node set closed under parents and siblings."""
        tree = cls(backend)
        nodes = set(nodes)
        for c in sorted(nodes):
            p = backend.parent_of(c)
            if p is None:
                if c not in tree.roots:
                    raise ValueError(f"cell {c} is not a root of the backend")
                continue
            if p not in nodes:
                raise ValueError(f"parent {p} of cell {c} missing")
        internal = {backend.parent_of(c) for c in nodes} - {None}
        for c in sorted(internal):
            kids = backend.children_of(c)
            if not set(kids) <= nodes:
                raise ValueError(f"cell {c} has only some of its children")
        tree.nodes = nodes | set(tree.roots)
        tree.leaf_set = tree.nodes - internal
        tree.rebuild_patch_history()
        return tree

    def rebuild_patch_history(self) -> None:
        """Recompute the patch history from the internal nodes (sorted by min id).

        Only meaningful for conforming trees, whose internal nodes split into
        whole subdivision patches.
        """
        seen = set()
        patches = []
        for c in self.internal_nodes():
            if c in seen:
                continue
            s = self.backend.subdivision_patch(c)
            seen.update(s)
            patches.append(s)
        self.patch_history = patches

    def count_patches(self) -> int:
        """Number of distinct subdivision patches among the internal nodes."""
        return len({self.backend.subdivision_patch(c) for c in self.internal_nodes()})

    def is_full(self) -> bool:
        for c in self.nodes - self.leaf_set:
            if not set(self.backend.children_of(c)) <= self.nodes:
                return False
        return True

    def __repr__(self) -> str:
        return (f"RefinementTree(roots={len(self.roots)}, nodes={len(self.nodes)}, "
                f"leaves={len(self.leaf_set)}, complexity={self.complexity})")


def subdivide_patch(tree: RefinementTree, patch: Iterable[int]) -> RefinementTree:
    tree.subdivide(patch)
    return tree
