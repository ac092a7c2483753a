"""How much throughput does a good database placement buy?

Evaluates the LP throughput limit of the hand-made grid placement, then lets
the MILP choose where the eight databases go (one per edge node) and compares
it against random placements with the same storage.
"""

import numpy as np

from didcnc import harness
from didcnc.placement import eval_placement_lp, random_placement, random_selection, solve_milp_placement

world = harness.build_world(harness.edge_grid())
g, clients, sizes = world.graph, world.clients, world.x.sizes

lam, _ = eval_placement_lp(world.x, g, clients)
print(f"bundled placement: {lam:.1f} units/slot in total, {lam / len(clients):.1f} per client")

# node_budget=0 stops after the root relaxation and its primal heuristics;
# a few thousand nodes close the remaining gap in about a minute.
sol = solve_milp_placement(g, clients, sizes, node_budget=0)
print(f"MILP placement:    {sol.lam:.1f} ({sol.status}, LP bound {sol.root_bound:.1f})")
print(f"  {harness.placement_to_labels(sol.x, world)}")

rng = np.random.default_rng(0)
for name, draw in (("random placement", random_placement), ("random selection", random_selection)):
    vals = [eval_placement_lp(draw(g, sizes, 1, rng), g, clients)[0] for _ in range(20)]
    print(f"{name}:  mean {np.mean(vals):.1f}, min {min(vals):.1f}, max {max(vals):.1f}"
          f"  -> MILP is {sol.lam / np.mean(vals):.2f}x the mean")
