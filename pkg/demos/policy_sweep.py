"""Stability boundary of the three route-selection policies on the grid.

Short runs and a coarse rate grid, so the boundaries are rough; the
acceptance suite repeats this with 200k-slot runs and bisection.
"""

import sys

from didcnc import harness
from didcnc.placement import eval_placement_lp

horizon = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
sc = harness.edge_grid().replace(horizon=horizon, warmup=horizon // 10)
world = harness.build_world(sc)
lam_lp, _ = eval_placement_lp(world.x, world.graph, world.clients)
grid = [round(f * lam_lp) for f in (0.55, 0.65, 0.75, 0.85, 0.95)]
print(f"LP limit of the placement: {lam_lp:.0f} units/slot; probing {grid}")

for policy in ("didcnc", "l2s", "s2l"):
    res = harness.stability_sweep(sc.replace(policy=policy), grid)
    marks = " ".join(f"{lam:.0f}:{'S' if v.stable else 'U'}" for lam, v in res.points)
    print(f"{policy:7s} {marks}  -> largest stable {res.boundary:.0f}")
