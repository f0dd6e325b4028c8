"""Walk through one desk-scale instance from placement to grouped power.

Twenty users share four time slots and 24 single-antenna APs on a 1.04 km
square. We solve the power problem for a round-robin grouping, then let
GPGA move users between slots and watch the two bounds meet.

    python3 demos/01_one_instance.py [seed]
"""

import sys

import numpy as np

from cellfree_gbd import GbdConfig, Grouping, gamma_targets, generate_scenario, gpga, sample_qos, solve_fixed_grouping
from cellfree_gbd.baselines import metrics, no_grouping_solution, random_grouping
from cellfree_gbd.harness import DESK_RADIO

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
M, N, G = 24, 20, 4

scenario = generate_scenario(DESK_RADIO, M, N, seed)
qos = sample_qos(N, 1e5, 1.5e6, seed)
print(f"{M} APs, {N} users, {G} slots; coherence interval {DESK_RADIO.coherence_len} symbols")
print(f"target rates {qos.target_rate_bps.min() / 1e6:.2f} to {qos.target_rate_bps.max() / 1e6:.2f} Mbit/s")
print(f"large-scale gains span {10 * np.log10(scenario.beta.min()):.1f} to {10 * np.log10(scenario.beta.max()):.1f} dB")

# A slot gets a quarter of the frame, so each user's rate is scaled up by G before it becomes a target.
cfg = GbdConfig(num_groups=G)
rr = Grouping(np.arange(N) % G, G)
gamma = gamma_targets(qos, DESK_RADIO, rr)
print(f"\nround robin: SINR targets {gamma.min():.2f} to {gamma.max():.2f}")
fixed = solve_fixed_grouping(scenario, qos, rr, cfg)
print(f"  power {metrics(fixed).total_power_dbm:.2f} dBm, KKT residual {fixed.outcome.kkt_residual:.1e}")

sol, trace = gpga(scenario, qos, cfg)
print("\nGPGA iterations")
print("  k   status      P_k (W)       b_u (W)       b_l (W)   moves")
for r in trace.records:
    print(f"  {r.iteration:<3} {r.status:<10} {r.objective:12.6g} {r.upper:12.6g} {r.lower:12.6g}   {r.moves}")
print(f"stopped on '{trace.stop_reason}' after {len(trace)} primal solves")
rep = metrics(sol)
print(f"grouped power {rep.total_power_dbm:.2f} dBm, slot sizes {rep.group_sizes.tolist()}")

# Two references: a random assignment and everyone in a single slot.
rand = metrics(solve_fixed_grouping(scenario, qos, random_grouping(N, G, [seed, 1]), cfg))
single, single_rep = no_grouping_solution(scenario, qos, cfg)
print(f"\nrandom grouping   {rand.total_power_dbm:7.2f} dBm")
print(f"no grouping       {single_rep.total_power_dbm:7.2f} dBm")
print(f"GPGA              {rep.total_power_dbm:7.2f} dBm")
