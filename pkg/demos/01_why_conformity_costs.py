# Greedy refinement on conforming meshes: who pays for forced splits.
#
# On the L-shaped domain the corner singularity of u1 pulls refinement toward
# the origin.  Splitting a cell there also splits its refinement-edge mate,
# and the two greedy variants disagree about who is charged for that.

from conftree import Algorithm1, Algorithm2, H1Error, NVBBackend, build_domain_mesh, target_u1


def fresh(Engine):
    backend = NVBBackend(build_domain_mesh("lshape"))
    return backend, Engine(backend, H1Error(target_u1(), backend))


for Engine in (Algorithm1, Algorithm2):
    backend, eng = fresh(Engine)
    t0, m = eng.top()
    patch = backend.necessary_patch(eng.tree, m)
    print(f"{Engine.name}: marked cell {m} (indicator {t0:.4e}), patch {patch}")
    eng.step()
    for c in eng.tree.leaves():
        e, pen, mu = eng.leaf_state(c)
        print(f"  leaf {c:2d} parent {backend.parent_of(c)!s:>4}  err={e:.3e}  "
              f"penalty={pen:.3e}  mu={mu:.3e}")

# With alg1 only the marked cell's children inherit a penalty; the mate's
# children start fresh.  alg2 charges every split cell.

# A few hundred steps later the penalties show up as cells that were marked
# but could not be split yet: their penalty grows while they wait for a
# coarser neighbour to catch up.
backend, eng = fresh(Algorithm1)
waits = 0
for _ in range(500):
    _, m = eng.top()
    if m not in backend.necessary_patch(eng.tree, m):
        waits += 1
    eng.step()
print(f"alg1: in 500 steps the marked cell was outside its own patch {waits} times")
