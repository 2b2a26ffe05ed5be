"""
Consensus on a fixed directed graph
===================================

Four agents on a ring with a shortcut. Every sample interval shrinks as
1/k^2, the intervals add up to the settling time, and the agents average
their sampled states at each instant.
"""

# %%
# Setup: an explicit graph and a random initial state.
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from fixedtime_consensus import (
    DirectedGraph,
    SwarmState,
    TopologySchedule,
    averaging_matrix,
    build_partition,
    consensus_weights,
    run,
)

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

g = DirectedGraph.from_edges(4, [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)])
rng = np.random.default_rng(0)
initial = SwarmState(0.0, rng.uniform(-5, 5, (4, 1)), rng.uniform(-2, 2, (4, 1)))

# %%
# The averaging matrix and its left eigenvector fix where the agents meet.
p = averaging_matrix(g)
xi = consensus_weights(p).xi
print("P =\n", np.round(p.entries, 3))
print("xi =", np.round(xi, 4))
print("predicted velocity:", float(xi @ initial.velocities[:, 0]))

# %%
# Twenty seconds of settling time, truncated after 60 intervals.
partition = build_partition(20.0, 60)
record, report = run(initial, TopologySchedule.fixed(g), partition, horizon=24.0)
print("stopped after", report.truncation_k, "intervals at t =", round(float(report.instant_times[-1]), 4))
print("final spreads:", report.residual_at_truncation)
print("matches prediction:", report.values_match)

# %%
# Positions, velocities and the spread at each sample instant.
fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
for i in range(4):
    axes[0].plot(record.times, record.positions[:, i, 0], label=f"agent {i + 1}")
    axes[1].plot(record.times, record.velocities[:, i, 0])
axes[2].semilogy(report.instant_times, report.disagreement_history)
axes[2].legend(["position spread", "velocity spread"])
for ax in axes:
    ax.axvline(partition.settling_time, color="k", ls="--", lw=0.8)
axes[0].legend(ncol=4, fontsize=8)
axes[2].set_xlabel("t (s)")
fig.savefig(out / "fixed_topology.png", dpi=120)
print("figure written to", out / "fixed_topology.png")
