"""Following a shifting demand with online database replacement.

Three edge nodes have no storage and the rest hold one database each, so
only six of eight databases fit at the edge.  Client popularity follows a
Zipf law whose ranks occasionally swap.  The fixed placement was tuned for
uniform demand; the score policy rewrites one node's cache per decision.
"""

import sys

from didcnc import harness

horizon = int(sys.argv[1]) if len(sys.argv) > 1 else 30_000
base = harness.bundled("popularity_swap").replace(horizon=horizon, warmup=horizon // 5)

for policy, lam in (("none", 560.0), ("score", 560.0), ("score", 840.0)):
    rep = {"policy": "none"} if policy == "none" else {"policy": policy, "frame": 1000,
                                                       "score_samples": 64}
    v, res = harness.run_point(base.replace(replacement=rep), lam)
    sim = res.simulator
    verdict = "stable" if v.stable else f"unstable (stopped at slot {sim.t})"
    print(f"{policy:5s} at {lam:4.0f}: {verdict}, mean backlog {v.mean_backlog:.0f}")
    if res.replacement:
        for rec in res.frames:
            if rec.delta:
                print(f"    frame {rec.frame:3d}: {rec.delta}")
