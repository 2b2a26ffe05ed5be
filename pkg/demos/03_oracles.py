"""
Checking the closed form three independent ways
===============================================

1. Integrate the closed loop with classical RK4 and compare.
2. Solve the minimum-energy boundary value problem on every interval and
   compare its affine control with the one the agents apply.
3. Raise the averaging matrix to high powers and compare the limit with
   the consensus weights.
"""

# %%
import numpy as np

from fixedtime_consensus import DirectedGraph, SwarmState, TopologySchedule, averaging_matrix, build_partition
from fixedtime_consensus import oracle

g = DirectedGraph.from_edges(3, [(1, 2), (2, 3), (3, 2)])
schedule = TopologySchedule.fixed(g)
initial = SwarmState(0.0, [[2.0], [-1.0], [0.5]], [[0.0], [1.0], [-1.0]])
partition = build_partition(10.0, 60)

# %%
# RK4 against the interval polynomials. The input is affine in time on
# each interval, so RK4 reproduces it up to round-off at any step count.
for steps in (100, 200, 400, 1000):
    rk = oracle.rk4_reference(initial, schedule, partition, steps, intervals=10)
    cf = oracle.closed_form_on_grid(initial, schedule, partition, steps, intervals=10)
    print(f"{steps:5d} steps/interval: max deviation {oracle.max_deviation(rk, cf):.2e}")

# %%
# Minimum-energy certificates for the whole run.
certs = oracle.certify_run(initial, schedule, partition)
print("certificates:", len(certs))
print("max relative coefficient mismatch:", max(c.deviation for c in certs))
print("max terminal error:", max(c.terminal_error for c in certs))
print("energy spent on the first interval:", [round(c.energy, 4) for c in certs[:3]])

# %%
# The rank-one limit of P^k. Agent 1 is the only root, so xi = e_1, and
# the per-step contraction equals the second largest eigenvalue modulus.
p = averaging_matrix(g)
limit = oracle.matrix_power_limit(p)
print("xi estimate:", np.round(limit.xi_estimate, 12))
print("rate", limit.rate, "vs |lambda_2|", oracle.second_eigenvalue_modulus(p))
