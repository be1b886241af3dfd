# Checking the near-best bound by brute force.
#
# For small complexities every conforming tree can be listed, so the best
# achievable error sigma_n is known exactly and the greedy error can be held
# against the bound (N + 1 + (P - 1) n) / (N - n + 1) * sigma_n.

from conftree import H1Error, NVBBackend, StoppingRule, build_domain_mesh, run
from conftree import Algorithm1, Algorithm2, certify_near_best, sigma_table, target_u2

backend = NVBBackend(build_domain_mesh("square"))
err = H1Error(target_u2(), backend)

table = sigma_table(backend, err, 10)
for n in range(11):
    print(f"n={n:2d}  trees={table.states[n]:5d}  sigma_n={table.sigma[n]:.6e}  "
          f"best leaves={table.argmin[n]}")

for Engine in (Algorithm1, Algorithm2):
    _, trace = run(Engine(backend, err), StoppingRule.max_iterations(10))
    rep = certify_near_best(trace, table, P=backend.max_patch_size)
    print(f"\n{Engine.name}")
    print(rep.text())

# The ratio column is Err(T_N) / bound.  It is 1 at N = 0 (the initial mesh
# is its own best), and a greedy run that is near best stays below 1.
