# Convergence on the L-shape: both algorithms recover the optimal rate.
#
# With uniform refinement the corner singularity r^(2/3) caps the H1 error at
# roughly (#leaves)^(-1/3).  The greedy algorithms adapt toward the origin and
# should see (#leaves)^(-1/2), the best rate for piecewise affines in 2D.

import time

import numpy as np

from conftree import bench
from conftree.bench import ExperimentConfig

cfg = ExperimentConfig(target="u1", stop="max_leaves", stop_value=20_000)
problem = bench.make_problem(cfg)

curves = {}
for alg in ("alg1", "alg2"):
    tic = time.perf_counter()
    res = bench.run_experiment(cfg, alg)
    cards, errs = np.array(bench.convergence_rows(res.trace, 10)).T
    curves[alg] = (cards, errs)
    print(f"{alg}: {res.trace.final.n} steps, {int(cards[-1])} leaves, "
          f"H1 error {errs[-1]:.3e} in {time.perf_counter() - tic:.1f}s")

for alg, (cards, errs) in curves.items():
    print(f"{alg} slope on [1e3, 2e4]: {bench.fit_slope(cards, errs, 1e3, 2e4):+.3f}")

# a uniform mesh for comparison: split every cell through its necessary patch
backend = problem.backend
err = problem.err
tree = backend.initial_tree()
uniform = []
for level in range(10):
    for c in sorted(tree.leaf_set):
        while c in tree.leaf_set:
            tree.subdivide(backend.necessary_patch(tree, c))
    e = np.sqrt(sum(err(c) for c in tree.leaf_set))
    uniform.append((tree.n_leaves(), e))
    print(f"uniform level {level + 1}: {tree.n_leaves():6d} leaves, H1 error {e:.3e}")
print(f"uniform slope: {bench.fit_slope(*np.array(uniform).T):+.3f}")
