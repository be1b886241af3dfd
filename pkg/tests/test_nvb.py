import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import assume, given, strategies as st

from conftree.nvb import (InitialMesh, LabelingError, NVBBackend, build_domain_mesh,
                          check_compatible, compatible_initial_labeling, dyadic_midpoint,
                          to_dyadic)
from conftree.oracle import SearchCapExceeded, minimal_completion
from conftree.tree import PatchError

from conftest import random_conforming_tree, random_nonconforming_tree


def rotations(tri):
    a, b, c = tri
    return [(a, b, c), (b, c, a), (c, a, b)]


def compatible_by_definition(triangles):
    """Shared edges are the refinement edge of both neighbours or of neither."""
    ref = [frozenset((t[0], t[2])) for t in triangles]
    for i, j in itertools.combinations(range(len(triangles)), 2):
        shared = set(triangles[i]) & set(triangles[j])
        if len(shared) == 2:
            e = frozenset(shared)
            if (ref[i] == e) != (ref[j] == e):
                return False
    return True


@pytest.mark.parametrize("domain", ["square", "lshape"])
def test_labeling_search_matches_brute_force(domain):
    mesh = build_domain_mesh(domain)
    labelings = [list(c) for c in itertools.product(*(rotations(t) for t in mesh.triangles))]
    # compatibility only depends on which vertex is newest
    good = {tuple(t[1] for t in l) for l in labelings if compatible_by_definition(l)}
    assert len(labelings) == 3 ** len(mesh.triangles)
    assert good
    scrambled = [t[1:] + t[:1] for t in mesh.triangles]
    found = compatible_initial_labeling(mesh.vertices, scrambled)
    assert [set(t) for t in found.triangles] == [set(t) for t in mesh.triangles]
    assert tuple(t[1] for t in found.triangles) in good
    assert check_compatible(found)


def test_shipped_meshes_are_compatible_and_have_the_right_area():
    sq, ls = build_domain_mesh("square"), build_domain_mesh("lshape")
    assert check_compatible(sq) and check_compatible(ls)
    assert sq.area() == 4 and ls.area() == Fraction(3, 4)


def test_incompatible_labeling_is_rejected():
    mesh = build_domain_mesh("square")
    bad = InitialMesh(mesh.vertices, [(0, 1, 4)] + mesh.triangles[1:], "bad")
    assert not check_compatible(bad)
    with pytest.raises(LabelingError):
        NVBBackend(bad)


def test_dyadic_vertices_are_interned():
    b = NVBBackend(build_domain_mesh("square"))
    m = dyadic_midpoint(to_dyadic(-1, -1), to_dyadic(1, -1))
    assert m == to_dyadic(0, -1)
    t = random_conforming_tree(b, 200, random.Random(1))
    coords = [b.vxy[v] for v in range(len(b.vxy))]
    assert len(set(coords)) == len(coords)
    assert b.is_conforming(t)


def test_bisection_rule(square):
    c = square.roots[0]
    a0, a1, a2 = square.triangle(c)
    k1, k2 = square.children_of(c)
    m = square.midpoint_vertex(a0, a2)
    assert square.triangle(k1) == (a0, m, a1)
    assert square.triangle(k2) == (a2, m, a1)
    assert square.measure(k1) == square.measure(k2) == square.measure(c) / 2


def test_boundary_cells_are_their_own_patch(square):
    for c in square.roots:
        assert square.subdivision_patch(c) == (c,)
    t = square.initial_tree()
    t.subdivide((square.roots[0],))
    assert square.is_conforming(t)


def test_interior_patch_is_the_mate_pair(lshape):
    t = lshape.initial_tree()
    c = lshape.roots[0]
    # children of a root share the interior diagonal as refinement edge
    t.subdivide(lshape.necessary_patch(t, c))
    kids = [k for k in t.leaves() if lshape.parent_of(k) == c]
    for k in kids:
        s = lshape.subdivision_patch(k)
        if len(s) == 2:
            assert lshape.mate(k) in s and lshape.mate(lshape.mate(k)) == k


def test_hanging_node_is_detected_and_completed(square):
    t = square.initial_tree()
    c = square.roots[0]
    t.subdivide((c,))                    # boundary refinement edge: fine
    child = square.children_of(c)[0]     # refinement edge = interior diagonal
    t.refine_cell(child)
    assert not square.is_conforming(t)
    hanging = square.hanging_leaves(t)
    assert len(hanging) == 1
    neighbour = hanging[0]
    assert square.parent_of(neighbour) is None
    done = square.complete(t)
    assert square.is_conforming(done)
    # the neighbour and its child on the diagonal must split: two more splits
    assert len(done.nodes) == len(t.nodes) + 4
    assert done.nodes == minimal_completion(t).nodes
    assert done.complexity == done.count_patches() == 3


@given(st.integers(0, 10**6), st.integers(0, 400), st.sampled_from(["square", "lshape"]))
def test_necessary_patch_walk(seed, steps, domain):
    b = NVBBackend(build_domain_mesh(domain))
    rng = random.Random(seed)
    t = b.initial_tree()
    mon = b.conformity_monitor(t)
    for n in range(steps):
        c = rng.choice(t.leaves())
        patch = b.necessary_patch(t, c)
        assert all(k in t.leaf_set for k in patch)
        kids = t.subdivide(patch)
        mon.update(patch, kids)
        assert t.complexity == n + 1
    assert mon.conforming and b.is_conforming(t)
    area = sum(Fraction(b.measure(k)) for k in t.leaf_set)
    assert area == build_domain_mesh(domain).area()
    assert t.count_patches() == t.complexity


def test_necessary_patch_splits_the_cell_eventually(lshape):
    rng = random.Random(7)
    t = random_conforming_tree(lshape, 60, rng)
    for c in t.leaves()[:20]:
        u = t.copy()
        while c in u.leaf_set:
            u.subdivide(lshape.necessary_patch(u, c))
            assert lshape.is_conforming(u)


def test_subdividing_a_non_leaf_patch_fails(square):
    t = square.initial_tree()
    c = square.roots[0]
    t.subdivide((c,))
    with pytest.raises(PatchError):
        t.subdivide((c,))


@given(st.integers(0, 10**6))
def test_monitor_agrees_with_full_scan(seed):
    rng = random.Random(seed)
    b = NVBBackend(build_domain_mesh(rng.choice(["square", "lshape"])))
    t = b.initial_tree()
    mon = b.conformity_monitor(t)
    for _ in range(30):
        c = rng.choice(t.leaves())
        kids = t.refine_cell(c)
        mon.update((c,), kids)
        assert mon.conforming == b.is_conforming(t)


@given(st.integers(0, 10**6))
def test_complete_is_minimal_and_idempotent(seed):
    rng = random.Random(seed)
    b = NVBBackend(build_domain_mesh(rng.choice(["square", "lshape"])))
    t = None
    while t is None:
        t = random_nonconforming_tree(b, rng)
    done = b.complete(t)
    assert b.is_conforming(done)
    assert t.nodes <= done.nodes
    assert b.complete(done).nodes == done.nodes
    try:
        best = minimal_completion(t, cap=20_000)
    except SearchCapExceeded:
        assume(False)
    assert done.nodes == best.nodes


def test_complete_leaves_conforming_trees_alone(lshape):
    t = random_conforming_tree(lshape, 30, random.Random(3))
    done = lshape.complete(t)
    assert done.nodes == t.nodes and done.patch_history == t.patch_history
