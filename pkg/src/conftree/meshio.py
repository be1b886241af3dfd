"""Plain-text mesh and patch dumps.

Mesh format::

    vertices <nv> cells <nc>
    v <x> <y>                      # nv lines, 17 significant digits
    c <i0> <i1> <i2> <slot>        # nc lines, 0-based, slot of the newest vertex

Cells are written as ``(a0, a1, a2)`` so the newest-vertex slot is always 1.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class MeshDump:
    vertices: list[tuple[float, float]]
    cells: list[tuple[int, int, int, int]]

    def text(self) -> str:
        out = [f"vertices {len(self.vertices)} cells {len(self.cells)}"]
        out += [f"v {x:.17g} {y:.17g}" for x, y in self.vertices]
        out += [f"c {a} {b} {c} {s}" for a, b, c, s in self.cells]
        return "\n".join(out) + "\n"


def mesh_from_tree(tree) -> MeshDump:
    """Leaves in id order; vertices numbered by first appearance."""
    backend = tree.backend
    index: dict[int, int] = {}
    verts = []
    cells = []
    for c in tree.leaves():
        row = []
        for v in backend.triangle(c):
            if v not in index:
                index[v] = len(verts)
                verts.append(backend.vxy[v])
            row.append(index[v])
        cells.append((row[0], row[1], row[2], 1))
    return MeshDump(verts, cells)


def write_mesh(tree, path) -> MeshDump:
    dump = mesh_from_tree(tree)
    with open(path, "w") as fh:
        fh.write(dump.text())
    return dump


def parse_mesh(text: str) -> MeshDump:
    lines = text.splitlines()
    head = lines[0].split()
    if len(head) != 4 or head[0] != "vertices" or head[2] != "cells":
        raise ValueError(f"bad mesh header: {lines[0]!r}")
    nv, nc = int(head[1]), int(head[3])
    if len(lines) != 1 + nv + nc:
        raise ValueError(f"expected {1 + nv + nc} lines, got {len(lines)}")
    verts = []
    for line in lines[1:1 + nv]:
        tag, x, y = line.split()
        if tag != "v":
            raise ValueError(f"expected vertex line, got {line!r}")
        verts.append((float(x), float(y)))
    cells = []
    for line in lines[1 + nv:]:
        tag, *idx = line.split()
        if tag != "c" or len(idx) != 4:
            raise ValueError(f"expected cell line, got {line!r}")
        a, b, c, s = map(int, idx)
        if s not in (0, 1, 2) or max(a, b, c) >= nv or min(a, b, c) < 0:
            raise ValueError(f"bad cell line {line!r}")
        cells.append((a, b, c, s))
    return MeshDump(verts, cells)


def read_mesh(path) -> MeshDump:
    with open(path) as fh:
        return parse_mesh(fh.read())


def write_patches(tree, path) -> None:
    with open(path, "w") as fh:
        for patch in tree.patch_history:
            fh.write(" ".join(map(str, patch)) + "\n")


def read_patches(path) -> list[tuple[int, ...]]:
    with open(path) as fh:
        return [tuple(int(x) for x in line.split()) for line in fh if line.strip()]


def dump_is_conforming(dump: MeshDump) -> bool:
    """No vertex of the dump lies strictly inside any cell edge."""
    import numpy as np

    V = np.asarray(dump.vertices)
    edges = set()
    for a, b, c, _ in dump.cells:
        for u, v in ((a, b), (b, c), (a, c)):
            edges.add((min(u, v), max(u, v)))
    for u, v in edges:
        p, q = V[u], V[v]
        d = q - p
        L2 = float(d @ d)
        w = V - p
        cross = d[0] * w[:, 1] - d[1] * w[:, 0]
        t = (w @ d) / L2
        on = (np.abs(cross) <= 1e-12 * L2) & (t > 1e-12) & (t < 1 - 1e-12)
        if on.any():
            return False
    return True
