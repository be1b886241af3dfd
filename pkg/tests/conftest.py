import random

import pytest
from hypothesis import HealthCheck, settings

from conftree.nvb import NVBBackend, build_domain_mesh

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

CRITERIA: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture(scope="session")
def criteria():
    return CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, title, detail = CRITERIA[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {k:>2}. {title}: {detail}")


@pytest.fixture
def square():
    return NVBBackend(build_domain_mesh("square"))


@pytest.fixture
def lshape():
    return NVBBackend(build_domain_mesh("lshape"))


def random_conforming_tree(backend, steps, rng: random.Random):
    """Conforming tree grown by necessary patches of random leaves."""
    t = backend.initial_tree()
    for _ in range(steps):
        c = rng.choice(t.leaves())
        t.subdivide(backend.necessary_patch(t, c))
    return t


def random_nonconforming_tree(backend, rng: random.Random, max_nodes=40):
    """Conforming start plus a few single-cell splits; None if it stayed conforming."""
    t = random_conforming_tree(backend, rng.randint(0, 6), rng)
    for _ in range(rng.randint(1, 3)):
        t.refine_cell(rng.choice(t.leaves()))
    if len(t.nodes) > max_nodes or backend.is_conforming(t):
        return None
    return t
