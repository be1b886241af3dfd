"""Greedy tree algorithms on conforming meshes.

Both engines repeatedly mark the leaf with the largest marking indicator
(smallest cell id on ties), subdivide a patch that is necessary for it and
update indicators of the new cells.  They differ in what the new indicators
remember:

``Algorithm1`` (conformity aware)
    penalizes the *request*: the marked cell's penalization grows by
    ``1/err(marked)`` whether or not it was actually split, and only the
    marked cell and its children inherit that increment.

``Algorithm2`` (simple marking)
    penalizes every split cell, ``mu(c) = (1/err(c) + 1/mu(parent))**-1``,
    regardless of why it was split.

Indicator arithmetic uses 1/0 = inf, r + inf = inf, 1/inf = 0.
"""

from __future__ import annotations

import csv
import heapq
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

from .tree import GeometryBackend, RefinementTree

log = logging.getLogger(__name__)

INF = math.inf


class InvariantViolation(RuntimeError):
    pass


class IterationCapExceeded(RuntimeError):
    def __init__(self, msg, tree=None, trace=None):
        super().__init__(msg)
        self.tree = tree
        self.trace = trace


def inv(x: float) -> float:
    if x == 0:
        return INF
    if x == INF:
        return 0.0
    return 1.0 / x


def marking_indicator(err: float, lam: float) -> float:
    """(1/err + lam)**-1 with the extended-real conventions."""
    return inv(inv(err) + lam)


class ExactSum:
    """Exact running sum of nonnegative floats, read back correctly rounded."""

    _SHIFT = 1074

    def __init__(self):
        self._acc = 0

    @classmethod
    def _scaled(cls, x: float) -> int:
        num, den = float(x).as_integer_ratio()
        return num << (cls._SHIFT - den.bit_length() + 1)

    def add(self, x: float) -> None:
        self._acc += self._scaled(x)

    def sub(self, x: float) -> None:
        self._acc -= self._scaled(x)

    @property
    def value(self) -> float:
        return self._acc / (1 << self._SHIFT)


@dataclass(frozen=True)
class StoppingRule:
    kind: str
    value: float = 0.0

    KINDS = ("indicator_zero", "max_iterations", "error_below", "max_leaves")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown stopping rule {self.kind!r}")

    @classmethod
    def indicator_zero(cls):
        return cls("indicator_zero")

    @classmethod
    def max_iterations(cls, n: int):
        return cls("max_iterations", int(n))

    @classmethod
    def error_below(cls, tol: float):
        return cls("error_below", float(tol))

    @classmethod
    def max_leaves(cls, n: int):
        return cls("max_leaves", int(n))

    def satisfied(self, n: int, err_global: float, n_leaves: int) -> bool:
        if self.kind == "max_iterations":
            return n >= self.value
        if self.kind == "error_below":
            return err_global <= self.value
        if self.kind == "max_leaves":
            return n_leaves >= self.value
        return False


@dataclass
class TraceRecord:
    n: int
    marked_cell: int | None
    patch_size: int
    t_n: float
    err_global: float
    leaves: int
    complexity: int


TRACE_HEADER = ("n", "marked_cell", "patch_size", "t_n", "err_global", "leaves", "complexity")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


@dataclass
class RunTrace:
    algorithm: str
    records: list[TraceRecord] = field(default_factory=list)
    monotone_violations: int = 0
    conformity_violations: int = 0
    complexity_violations: int = 0

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    def at(self, n: int) -> TraceRecord:
        rec = self.records[n]
        assert rec.n == n
        return rec

    def marked_sequence(self) -> list[int]:
        return [r.marked_cell for r in self.records if r.marked_cell is not None]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for r in self.records:
                w.writerow([fmt(getattr(r, k)) for k in TRACE_HEADER])


def read_trace_csv(path, algorithm: str = "") -> RunTrace:
    trace = RunTrace(algorithm)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            trace.records.append(TraceRecord(
                int(row["n"]),
                int(row["marked_cell"]) if row["marked_cell"] else None,
                int(row["patch_size"]),
                float(row["t_n"]),
                float(row["err_global"]),
                int(row["leaves"]),
                int(row["complexity"])))
    return trace


class GreedyEngine:
    """Shared state machine; subclasses define how indicators are updated.

    ``pen`` holds the penalization of each leaf: ``lambda`` for Algorithm 1,
    and ``1/mu(parent)`` for Algorithm 2, so ``mu = (1/err + pen)**-1`` in
    both cases.
    """

    name = "greedy"

    def __init__(self, backend: GeometryBackend, err: Callable[[int], float],
                 tree: RefinementTree | None = None, check_conformity: bool = True):
        self.backend = backend
        self.err = err
        self.tree = tree if tree is not None else backend.initial_tree()
        self.n = self.tree.complexity
        self.pen: dict[int, float] = {}
        self.mu: dict[int, float] = {}
        self._heap: list[tuple[float, int]] = []
        self._errsum = ExactSum()
        self.monitor = backend.conformity_monitor(self.tree) if check_conformity else None
        for c in self.tree.leaves():
            self._new_leaf(c, 0.0)

    def _local(self, c: int) -> float:
        e = self.err(c)
        if not e >= 0:
            raise ValueError(f"local error of cell {c} is {e}")
        return e

    def _new_leaf(self, c: int, pen: float) -> None:
        e = self._local(c)
        self._errsum.add(e)
        self.pen[c] = pen
        self._set_mu(c, inv(inv(e) + pen))

    def _set_mu(self, c: int, mu: float) -> None:
        self.mu[c] = mu
        heapq.heappush(self._heap, (-mu, c))

    def _drop_leaf(self, c: int) -> None:
        self._errsum.sub(self._local(c))
        del self.mu[c]

    @property
    def err_global(self) -> float:
        return self._errsum.value

    def top(self) -> tuple[float, int]:
        """Current maximum marking indicator and the marked leaf."""
        heap = self._heap
        while heap:
            key, c = heap[0]
            if self.mu.get(c) == -key:
                return -key, c
            heapq.heappop(heap)
        raise InvariantViolation("no leaves")

    def leaf_state(self, c: int) -> tuple[float, float, float]:
        """(err, penalization, mu) of a leaf."""
        return self.err(c), self.pen[c], self.mu[c]

    def record(self, marked=None, patch_size=0) -> TraceRecord:
        t, _ = self.top()
        return TraceRecord(self.n, marked, patch_size, t, self.err_global,
                           self.tree.n_leaves(), self.tree.complexity)

    def step(self) -> TraceRecord:
        t, m = self.top()
        rec_err = self.err_global
        n_leaves = self.tree.n_leaves()
        patch = self.backend.necessary_patch(self.tree, m)
        kids = self.tree.subdivide(patch)
        self._update(m, patch, kids)
        for c in patch:
            self._drop_leaf(c)
        if self.monitor is not None:
            self.monitor.update(patch, kids)
        rec = TraceRecord(self.n, m, len(patch), t, rec_err, n_leaves, self.n)
        self.n += 1
        return rec

    def _update(self, marked, patch, kids):
        raise NotImplementedError

    def recompute_mu(self) -> dict[int, float]:
        """Marking indicators recomputed from (err, pen); test cross-check."""
        return {c: inv(inv(self.err(c)) + self.pen[c]) for c in self.tree.leaf_set}


class Algorithm1(GreedyEngine):
    name = "alg1"

    def _update(self, m, patch, kids):
        self.pen[m] = inv(self._local(m)) + self.pen[m]
        if m not in patch:
            self._set_mu(m, inv(inv(self._local(m)) + self.pen[m]))
        parent = self.backend.parent_of
        for c in kids:
            self._new_leaf(c, self.pen[parent(c)])


class Algorithm2(GreedyEngine):
    name = "alg2"

    def _update(self, m, patch, kids):
        parent = self.backend.parent_of
        for c in kids:
            p = parent(c)
            # 1/mu(p) evaluated as (1/err(p) + pen(p)), the quantity mu(p) inverted
            self._new_leaf(c, inv(self._local(p)) + self.pen[p])


ENGINES = {"alg1": Algorithm1, "alg2": Algorithm2}


def run(engine: GreedyEngine, stop: StoppingRule, iteration_cap: int | None = None,
        on_step: Callable[[GreedyEngine, TraceRecord], None] | None = None,
        strict: bool = False) -> tuple[RefinementTree, RunTrace]:
    """Drive an engine until ``stop`` holds or all indicators vanish.

    Invariants (monotone maxima, conformity, |T_n| = n) are counted in the
    trace; with ``strict`` the first violation raises.
    """
    trace = RunTrace(engine.name)
    prev_t = INF
    while True:
        t, _ = engine.top()
        if t > prev_t:
            trace.monotone_violations += 1
            if strict:
                raise InvariantViolation(f"t_{engine.n} = {t!r} > t_{engine.n - 1} = {prev_t!r}")
        prev_t = t
        if t == 0 or stop.satisfied(engine.n, engine.err_global, engine.tree.n_leaves()):
            break
        if iteration_cap is not None and engine.n >= iteration_cap:
            trace.records.append(engine.record())
            raise IterationCapExceeded(
                f"{stop.kind} not reached within {iteration_cap} iterations",
                engine.tree, trace)
        rec = engine.step()
        trace.records.append(rec)
        if engine.tree.complexity != engine.n:
            trace.complexity_violations += 1
            if strict:
                raise InvariantViolation(f"|T_{engine.n}| = {engine.tree.complexity}")
        if engine.monitor is not None and not engine.monitor.conforming:
            trace.conformity_violations += 1
            if strict:
                raise InvariantViolation(f"T_{engine.n} is not conforming")
        if on_step is not None:
            on_step(engine, rec)
    trace.records.append(engine.record())
    return engine.tree, trace


def run_algorithm1(backend, err, stop=StoppingRule.indicator_zero(), **kw):
    check = kw.pop("check_conformity", True)
    return run(Algorithm1(backend, err, check_conformity=check), stop, **kw)


def run_algorithm2(backend, err, stop=StoppingRule.indicator_zero(), **kw):
    check = kw.pop("check_conformity", True)
    return run(Algorithm2(backend, err, check_conformity=check), stop, **kw)


def global_error(tree: RefinementTree, err: Callable[[int], float]) -> float:
    return math.fsum(err(c) for c in tree.leaf_set)
