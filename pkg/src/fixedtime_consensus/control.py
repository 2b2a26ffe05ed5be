"""Sampled relative-state control law and its exact closed-loop propagation.

On every interval ``[t_k, t_{k+1})`` of length ``D`` agent ``i`` applies the
affine-in-time acceleration

    u_i(t) = -6 (D - 2s) / D^3 * ex_i  -  2 (2D - 3s) / D^2 * ev_i,   s = t - t_k,

where ``ex_i`` and ``ev_i`` are the relative position/velocity sums sampled
at ``t_k`` divided by ``|N_i| + 1``. Between samples the state is a cubic
(position) and quadratic (velocity) polynomial in ``s``; at ``t_{k+1}`` each
agent lands on the average of itself and its neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .graph import DirectedGraph, GraphDimensionError, averaging_matrix
from .timeline import Interval, PartitionError


class StateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SwarmState:
    """Positions and velocities of all agents, one row per agent."""

    time: float
    positions: NDArray[np.float64]
    velocities: NDArray[np.float64]

    def __post_init__(self) -> None:
        x = _as_rows(self.positions)
        v = _as_rows(self.velocities)
        if x.shape != v.shape:
            raise StateError(f"positions {x.shape} and velocities {v.shape} disagree")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and np.isfinite(self.time)):
            raise StateError("state contains non-finite values")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "time", float(self.time))

    @property
    def agent_count(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def stacked(self) -> NDArray[np.float64]:
        """``(X; V)`` as a ``(2N, n)`` array."""
        return np.vstack([self.positions, self.velocities])


def _as_rows(a: ArrayLike) -> NDArray[np.float64]:
    a = np.array(a, dtype=np.float64, copy=True)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise StateError(f"expected an (N, n) array, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class SampledSnapshot:
    """Relative-state sums each agent measures at a sample instant."""

    sample_time: float
    position_sums: NDArray[np.float64]
    velocity_sums: NDArray[np.float64]
    neighbor_counts: NDArray[np.int64]

    @property
    def position_error(self) -> NDArray[np.float64]:
        """``sum_j (x_i - x_j) / (|N_i| + 1)``."""
        return self.position_sums / (self.neighbor_counts + 1.0)[:, None]

    @property
    def velocity_error(self) -> NDArray[np.float64]:
        return self.velocity_sums / (self.neighbor_counts + 1.0)[:, None]


def _check_graph(state: SwarmState, g: DirectedGraph) -> None:
    if g.node_count != state.agent_count:
        raise GraphDimensionError(
            f"graph has {g.node_count} nodes but state has {state.agent_count} agents"
        )


def relative_sums(values: NDArray[np.float64], g: DirectedGraph) -> NDArray[np.float64]:
    """``sum_{j in N_i} (y_i - y_j)`` for every row ``i``."""
    out = np.zeros_like(values)
    dst, src = g.edge_index
    # unbuffered, in edge order: same summation order as a loop over neighbors
    np.add.at(out, dst, values[dst] - values[src])
    return out


def sample(state: SwarmState, g: DirectedGraph) -> SampledSnapshot:
    _check_graph(state, g)
    return SampledSnapshot(
        state.time,
        relative_sums(state.positions, g),
        relative_sums(state.velocities, g),
        g.neighbor_counts.copy(),
    )


def affine_coefficients(
    snap: SampledSnapshot, interval: Interval
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``(a, b)`` with ``u_i(t) = a_i + b_i (t - t_k)`` on the interval."""
    d = interval.length
    ex, ev = snap.position_error, snap.velocity_error
    a = -6.0 * ex / d**2 - 4.0 * ev / d
    b = 12.0 * ex / d**3 + 6.0 * ev / d**2
    return a, b


def control_inputs(snap: SampledSnapshot, interval: Interval, t: float) -> NDArray[np.float64]:
    """Accelerations of all agents at time ``t``, shape ``(N, n)``."""
    s = interval.offset(t)
    return _control_at_offset(snap, interval.length, s)


def _control_at_offset(snap: SampledSnapshot, d: float, s: float) -> NDArray[np.float64]:
    ex, ev = snap.position_error, snap.velocity_error
    return -6.0 * (d - 2.0 * s) / d**3 * ex - 2.0 * (2.0 * d - 3.0 * s) / d**2 * ev


def control_input(snap: SampledSnapshot, i: int, t: float, interval: Interval) -> NDArray[np.float64]:
    """Acceleration of agent ``i`` at ``t`` given the snapshot taken at ``t_k``."""
    if not np.isclose(snap.sample_time, interval.start, rtol=0, atol=1e-12 * max(1.0, abs(interval.start))):
        raise PartitionError(
            f"snapshot taken at {snap.sample_time!r}, interval starts at {interval.start!r}"
        )
    return control_inputs(snap, interval, t)[i]


def state_at_offset(
    state: SwarmState, snap: SampledSnapshot, d: float, s: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Closed-form ``(X, V)`` a time ``s`` into an interval of length ``d``.

    ``s == d`` gives the left limit at the interval end.
    """
    ex, ev = snap.position_error, snap.velocity_error
    r = s / d
    # (s^2 (3d - 2s) / d^3) and (s^2 (2d - s) / d^2) written in r = s/d
    cx = r * r * (3.0 - 2.0 * r)
    cv = d * r * r * (2.0 - r)
    x = state.positions + s * state.velocities - cx * ex - cv * ev
    # 6 s (d - s) / d^3 and s (4d - 3s) / d^2
    wx = 6.0 * r * (1.0 - r) / d
    wv = r * (4.0 - 3.0 * r)
    v = state.velocities - wx * ex - wv * ev
    return x, v


def propagate_interval(
    state_at_tk: SwarmState, g: DirectedGraph, interval: Interval, t: float
) -> SwarmState:
    """Exact closed-loop state at ``t`` in ``[t_k, t_{k+1})``."""
    _check_graph(state_at_tk, g)
    s = interval.offset(t)
    snap = sample(state_at_tk, g)
    x, v = state_at_offset(state_at_tk, snap, interval.length, s)
    return SwarmState(t, x, v)


def interval_limit(state_at_tk: SwarmState, g: DirectedGraph, interval: Interval) -> SwarmState:
    """Left limit of :func:`propagate_interval` as ``t -> t_{k+1}``."""
    _check_graph(state_at_tk, g)
    snap = sample(state_at_tk, g)
    x, v = state_at_offset(state_at_tk, snap, interval.length, interval.length)
    return SwarmState(interval.end, x, v)


def discrete_step(
    state_at_tk: SwarmState, g: DirectedGraph, interval: Interval, end_time: float | None = None
) -> SwarmState:
    """Sample-to-sample map ``X' = P X + D P V``, ``V' = P V``."""
    _check_graph(state_at_tk, g)
    p = averaging_matrix(g).entries
    pv = p @ state_at_tk.velocities
    x = p @ state_at_tk.positions + interval.length * pv
    return SwarmState(interval.end if end_time is None else end_time, x, pv)


def discrete_step_per_agent(state_at_tk: SwarmState, g: DirectedGraph, interval: Interval) -> SwarmState:
    """Agent-by-agent averaging form of :func:`discrete_step` (cross-check)."""
    _check_graph(state_at_tk, g)
    x0, v0 = state_at_tk.positions, state_at_tk.velocities
    x = np.empty_like(x0)
    v = np.empty_like(v0)
    for i in range(g.node_count):
        group = [i, *g.neighbors(i)]
        w = 1.0 / len(group)
        xs = sum((x0[j] for j in group), np.zeros(x0.shape[1]))
        vs = sum((v0[j] for j in group), np.zeros(v0.shape[1]))
        x[i] = w * xs + interval.length * w * vs
        v[i] = w * vs
    return SwarmState(interval.end, x, v)


def block_transition(g: DirectedGraph, length: float) -> NDArray[np.float64]:
    """``H = [[P, D P], [0, P]]`` acting on the stacked state ``(X; V)``."""
    p = averaging_matrix(g).entries
    n = g.node_count
    h = np.zeros((2 * n, 2 * n))
    h[:n, :n] = p
    h[:n, n:] = length * p
    h[n:, n:] = p
    return h
