"""How the master turns one primal solve into a better grouping.

A cut freezes the power and multipliers of one solve and scores any other
grouping. Moving users around a cycle of distinct slots changes the cut by
exactly the sum of the cycle's edge weights, so a negative cycle is a move
that the cut predicts will save power. We build the graph, check that
identity on a few loops, then follow the best loop and re-solve.

    python3 demos/02_cuts_and_loops.py
"""

from cellfree_gbd import GbdConfig
from cellfree_gbd import Cut, build_graph, ebsa, generate_scenario, gfsa, sample_qos, solve_fixed_grouping
from cellfree_gbd.gbd import initial_grouping, size_model
from cellfree_gbd.harness import DESK_RADIO
from cellfree_gbd.master import OPTIMALITY, Loop, all_differ_group_cycles, apply_loop

scenario = generate_scenario(DESK_RADIO, 8, 7, 11)
qos = sample_qos(7, 1e5, 1.5e6, 11)
cfg = GbdConfig(num_groups=3)
x = initial_grouping(7, 3)
sol = solve_fixed_grouping(scenario, qos, x, cfg)
print(f"start {x.group_of.tolist()}: {sol.total_power_w * 1e3:.4f} mW")

cut = Cut(OPTIMALITY, sol.outcome.q, sol.outcome.duals, sol.bstats, sol.gamma, size_model(scenario, qos, cfg))
print(f"cut value at the start equals the power: {cut.value(x) * 1e3:.4f} mW")

graph = build_graph(cut, x)
print(f"graph: {graph.num_nodes} nodes ({graph.num_users} users + {graph.num_groups} empty-seat nodes)")

cycles = all_differ_group_cycles(graph)
print(f"{len(cycles)} loops through distinct slots; checking five")
base = cut.value(x)
for nodes, w in cycles[:5]:
    loop = Loop(tuple(nodes), w, tuple(int(graph.group_of[v]) for v in nodes))
    moved = cut.value(apply_loop(x, loop)) - base
    print(f"  {str(list(nodes)):<14} loop weight {w * 1e3:+.6f} mW   cut change {moved * 1e3:+.6f} mW")

exact, greedy = ebsa(graph), gfsa(graph)
for label, hit in (("exact", exact), ("greedy", greedy)):
    if hit is None:
        print(f"{label} search: no negative loop")
    else:
        print(f"{label} search: {hit.nodes}, {hit.total_weight * 1e3:+.4f} mW")

if exact is not None:
    y = apply_loop(x, exact)
    after = solve_fixed_grouping(scenario, qos, y, cfg)
    print(f"\nafter the move {y.group_of.tolist()}: predicted {(base + exact.total_weight) * 1e3:.4f} mW, "
          f"re-solved {after.total_power_w * 1e3:.4f} mW")
    # the prediction ignores how the powers would re-balance, so it is only a guide
    print(f"actual saving {(sol.total_power_w - after.total_power_w) * 1e3:.4f} mW")
