"""Where does each request get processed, and where does its data come from?

Loads the bundled 3x3 grid, warms the network up for a few hundred slots so
the virtual queues are not empty, then prints the minimum-weight route of
every client under the three route-selection policies.
"""

from didcnc import harness
from didcnc.controller import SlotView, min_er

sc = harness.edge_grid().replace(horizon=2000, warmup=0).with_rate(4100.0)
sim, _, world = harness.make_simulator(sc)
sim.run(sc.horizon)

g = world.graph
view = SlotView(g, sim.vq, sim.x)
label = g.nodes

print(f"after {sim.t} slots at {sc.traffic['total_rate']:.0f} units/slot")
print(f"cached: {harness.placement_to_labels(sim.x, world)}\n")

for c, client in enumerate(world.clients):
    print(f"{client.id}: {label[client.source]} -> {label[client.destination]} "
          f"({client.service.id})")
    for policy in ("didcnc", "l2s", "s2l"):
        r = min_er(client, view, client_index=c, policy=policy)
        where = [label[i] for i in r.theta]
        src = [label[v] for v in r.sources]
        live = " | ".join("-".join(str(label[i]) for i in p) for p in r.live_paths)
        print(f"  {policy:7s} weight {r.weight:10.3e}  process at {where}  data from {src}"
              f"  live {live}")
    print()

# The joint policy never does worse than either benchmark on the same snapshot.
