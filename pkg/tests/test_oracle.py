import math
from fractions import Fraction

import pytest

from conftree.error import H1Error, target_u1, target_u2, target_xsq
from conftree.indicators import RunTrace, StoppingRule, TraceRecord, run, Algorithm1
from conftree.nvb import InitialMesh, NVBBackend, build_domain_mesh
from conftree.oracle import (SearchCapExceeded, certify_near_best, enumerate_conforming,
                             enumerate_conforming_by_nodes, near_best_factor, sigma,
                             sigma_table)


def one_triangle():
    F = Fraction
    mesh = InitialMesh([(F(0), F(0)), (F(1), F(0)), (F(0), F(1))], [(1, 0, 2)], "triangle")
    return NVBBackend(mesh)


def test_single_boundary_triangle_has_two_states():
    levels = enumerate_conforming(one_triangle(), 1)
    assert [len(l) for l in levels] == [1, 1]
    assert levels[1][0].leaves == (1, 2)


def test_sigma_on_one_triangle():
    b = one_triangle()
    err = H1Error(target_xsq(), b)
    s0, arg0 = sigma(b, err, 0)
    assert s0 == err(0) and arg0 == (0,)
    s1, arg1 = sigma(b, err, 1)
    assert s1 == min(err(0), err(1) + err(2))


@pytest.mark.parametrize("domain,counts", [
    ("square", [1, 4, 6, 8, 17]),
    ("lshape", [1, 3, 11, 26, 62]),
])
def test_patch_enumeration_agrees_with_node_enumeration(domain, counts):
    b = NVBBackend(build_domain_mesh(domain))
    by_patch = [len(l) for l in enumerate_conforming(b, 4)]
    by_nodes = enumerate_conforming_by_nodes(b, 4)
    assert by_patch == [by_nodes[n] for n in range(5)] == counts


def test_enumeration_cap():
    b = NVBBackend(build_domain_mesh("lshape"))
    with pytest.raises(SearchCapExceeded):
        enumerate_conforming(b, 8, cap=100)


@pytest.mark.parametrize("target,domain", [(target_u1, "lshape"), (target_u2, "square")])
def test_sigma_is_nonincreasing_and_attained(target, domain):
    b = NVBBackend(build_domain_mesh(domain))
    err = H1Error(target(), b)
    table = sigma_table(b, err, 6)
    vals = [table.sigma[n] for n in range(7)]
    assert all(a >= c for a, c in zip(vals, vals[1:]))
    for n in range(7):
        assert math.isclose(math.fsum(err(c) for c in table.argmin[n]), table.sigma[n],
                            rel_tol=1e-15)


def test_near_best_factor():
    assert near_best_factor(0, 0, 2) == 1.0
    assert near_best_factor(8, 8, 2) == 17.0
    assert near_best_factor(4, 2, 1) == 5 / 3


def test_certification_accepts_the_greedy_run_and_rejects_a_corrupted_one():
    b = NVBBackend(build_domain_mesh("lshape"))
    err = H1Error(target_u1(), b)
    table = sigma_table(b, err, 8)
    _, trace = run(Algorithm1(b, err), StoppingRule.max_iterations(8))
    rep = certify_near_best(trace, table, P=2)
    assert rep.passed and len(rep.rows) == 9
    bad = RunTrace("bad", [TraceRecord(r.n, r.marked_cell, r.patch_size, r.t_n,
                                       10 * r.err_global, r.leaves, r.complexity)
                           for r in trace.records])
    rep = certify_near_best(bad, table, P=2)
    assert not rep.passed
    assert "FAIL" in rep.text()


def test_report_csv(tmp_path):
    b = one_triangle()
    err = H1Error(target_xsq(), b)
    table = sigma_table(b, err, 3)
    _, trace = run(Algorithm1(b, err), StoppingRule.max_iterations(3))
    rep = certify_near_best(trace, table, P=2)
    rep.write_csv(tmp_path / "c.csv")
    table.write_csv(tmp_path / "s.csv")
    assert (tmp_path / "c.csv").read_text().startswith("N,best_n,bound,err,ratio,pass\n")
    assert (tmp_path / "s.csv").read_text().startswith("n,sigma_n,argmin_leaves\n")
