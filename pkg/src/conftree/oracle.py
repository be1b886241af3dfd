"""Brute-force ground truth for small instances.

Everything here enumerates: all conforming trees up to a given complexity
(to get the best errors sigma_n), all supersets of a tree up to a given size
(to get minimal completions).  Only usable at desk scale.
"""

from __future__ import annotations

import csv
from collections import Counter
from collections.abc import Callable
from dataclasses import dataclass, field

from .indicators import ExactSum, RunTrace, fmt
from .tree import GeometryBackend, RefinementTree


class SearchCapExceeded(RuntimeError):
    def __init__(self, msg, frontier=None):
        super().__init__(msg)
        self.frontier = frontier


@dataclass(frozen=True)
class MeshState:
    leaves: tuple[int, ...]
    complexity: int


def _children(backend, c):
    return backend.children_of(c)


def enumerate_conforming(backend: GeometryBackend, n_max: int,
                         cap: int = 10**7) -> list[list[MeshState]]:
    """All conforming trees with complexity <= n_max, grouped by complexity.

    Breadth-first over patch subdivisions from the initial mesh; each tree is
    produced once, keyed by its sorted leaf set.
    """
    start = frozenset(backend.roots)
    levels = [[start]]
    seen = {start}
    total = 1
    for n in range(n_max):
        nxt = []
        for leaves in levels[-1]:
            done = set()
            for c in sorted(leaves):
                if c in done:
                    continue
                s = backend.subdivision_patch(c)
                done.update(s)
                if not all(k in leaves for k in s):
                    continue
                new = set(leaves)
                for k in s:
                    new.discard(k)
                    new.update(_children(backend, k))
                new = frozenset(new)
                if new not in seen:
                    seen.add(new)
                    nxt.append(new)
                    total += 1
                    if total > cap:
                        raise SearchCapExceeded(
                            f"more than {cap} states at complexity {n + 1}", nxt)
        levels.append(nxt)
    return [[MeshState(tuple(sorted(s)), n) for s in lev] for n, lev in enumerate(levels)]


def enumerate_conforming_by_nodes(backend: GeometryBackend, n_max: int,
                                  cap: int = 10**6) -> Counter:
    """Independent count of conforming trees per complexity.

    Grows arbitrary full trees one cell at a time (up to 2 * n_max splits),
    keyed by their internal-node sets, and keeps the edge-to-edge ones.  The
    complexity is read off as the number of internal cells with a boundary
    refinement edge plus half of the others, which avoids any patch lookup.
    Returns a Counter complexity -> number of trees.
    """
    counts = Counter()
    roots = tuple(backend.roots)
    start = frozenset()
    frontier = [start]
    seen = {start}

    def measure(internal):
        single = sum(1 for c in internal if backend.arena.payload[c][3][2])
        return single + (len(internal) - single) // 2

    def leaves_of(internal):
        leaves = set(roots)
        for c in sorted(internal):
            leaves.discard(c)
            leaves.update(backend.children_of(c))
        return leaves

    def conforming(internal):
        leaves = leaves_of(internal)
        tree = RefinementTree(backend)
        tree.nodes = leaves | set(internal) | set(roots)
        tree.leaf_set = leaves
        return backend.is_conforming(tree)

    counts[0] = 1
    for _ in range(2 * n_max):
        nxt = []
        for internal in frontier:
            for c in sorted(leaves_of(internal)):
                new = internal | {c}
                if new in seen:
                    continue
                seen.add(new)
                if len(seen) > cap:
                    raise SearchCapExceeded(f"more than {cap} trees")
                nxt.append(new)
                if conforming(new):
                    n = measure(new)
                    if n <= n_max:
                        counts[n] += 1
        frontier = nxt
    return counts


@dataclass
class SigmaTable:
    sigma: dict[int, float] = field(default_factory=dict)
    argmin: dict[int, tuple[int, ...]] = field(default_factory=dict)
    states: dict[int, int] = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return max(self.sigma)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "sigma_n", "argmin_leaves"])
            for n in sorted(self.sigma):
                w.writerow([n, fmt(self.sigma[n]), " ".join(map(str, self.argmin[n]))])


def sigma_table(backend: GeometryBackend, err: Callable[[int], float], n_max: int,
                cap: int = 10**7) -> SigmaTable:
    """Best conforming errors sigma_n for n = 0..n_max, with a minimizer each."""
    levels = enumerate_conforming(backend, n_max, cap)
    table = SigmaTable()
    best, best_leaves = None, None
    for n, states in enumerate(levels):
        for st in states:
            acc = ExactSum()
            for c in st.leaves:
                acc.add(err(c))
            e = acc.value
            if best is None or e < best:
                best, best_leaves = e, st.leaves
        table.sigma[n] = best
        table.argmin[n] = best_leaves
        table.states[n] = len(states)
    return table


def sigma(backend, err, n: int) -> tuple[float, tuple[int, ...]]:
    t = sigma_table(backend, err, n)
    return t.sigma[n], t.argmin[n]


@dataclass
class CertRow:
    N: int
    best_n: int
    bound: float
    err: float
    ratio: float
    passed: bool


@dataclass
class CertificationReport:
    rows: list[CertRow]
    slack: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def tightest_ratio(self) -> float:
        return max((r.ratio for r in self.rows), default=0.0)

    def text(self) -> str:
        lines = [f"{'N':>3} {'n*':>3} {'bound':>14} {'Err(T_N)':>14} {'ratio':>8}  ok"]
        for r in self.rows:
            lines.append(f"{r.N:>3} {r.best_n:>3} {r.bound:>14.6e} {r.err:>14.6e} "
                         f"{r.ratio:>8.4f}  {'yes' if r.passed else 'NO'}")
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"{verdict}: {len(self.rows)} inequalities, tightest ratio "
                     f"{self.tightest_ratio:.4f}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "best_n", "bound", "err", "ratio", "pass"])
            for r in self.rows:
                w.writerow([r.N, r.best_n, fmt(r.bound), fmt(r.err), fmt(r.ratio), int(r.passed)])


def near_best_factor(N: int, n: int, P: int) -> float:
    return (N + 1 + (P - 1) * n) / (N - n + 1)


def certify_near_best(trace: RunTrace, table: SigmaTable, P: int,
                      slack: float = 1e-8, N_max: int | None = None) -> CertificationReport:
    """Check Err(T_N) <= min_n factor(N, n) * sigma_n for every recorded N."""
    rows = []
    for rec in trace.records:
        N = rec.n
        if N_max is not None and N > N_max:
            break
        cands = [(near_best_factor(N, n, P) * table.sigma[n], n)
                 for n in range(0, min(N, table.n_max) + 1)]
        bound, n_star = min(cands)
        ok = rec.err_global <= bound * (1 + slack)
        ratio = rec.err_global / bound if bound > 0 else (0.0 if rec.err_global == 0 else float("inf"))
        rows.append(CertRow(N, n_star, bound, rec.err_global, ratio, ok))
    return CertificationReport(rows, slack)


def minimal_completion(tree: RefinementTree, cap: int = 200_000) -> RefinementTree:
    """Smallest conforming superset of ``tree`` by breadth-first search.

    Level k holds all full trees obtained from ``tree`` by k extra cell
    splits; the first conforming one found has minimal cardinality.
    """
    backend = tree.backend

    def conforming(leaves):
        probe = RefinementTree(backend)
        probe.leaf_set = leaves
        return backend.is_conforming(probe)

    start = (frozenset(tree.nodes), frozenset(tree.leaf_set))
    frontier = [start]
    seen = {start[0]}
    while frontier:
        hits = [nodes for nodes, leaves in frontier if conforming(leaves)]
        if hits:
            return RefinementTree.from_nodes(backend, min(hits, key=sorted))
        nxt = []
        for nodes, leaves in frontier:
            for c in sorted(leaves):
                kids = backend.children_of(c)
                new = nodes.union(kids)
                if new in seen:
                    continue
                seen.add(new)
                nxt.append((new, leaves.difference((c,)).union(kids)))
                if len(seen) > cap:
                    raise SearchCapExceeded(f"more than {cap} candidate supersets",
                                            [n for n, _ in nxt])
        frontier = nxt
    raise SearchCapExceeded("search exhausted without a conforming tree")
