"""Full runs of the protocol over a time partition and topology schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import pdist

from .control import (
    StateError,
    SwarmState,
    _control_at_offset,
    discrete_step,
    sample,
    state_at_offset,
)
from .graph import (
    ConsensusWeights,
    DirectedGraph,
    GraphDimensionError,
    NotSIAError,
    averaging_matrix,
    consensus_weights,
    has_directed_spanning_tree,
    union_graph,
)
from .timeline import TimePartition


class JointConditionError(NotSIAError):
    """The (joint) spanning tree condition needed for a consensus prediction fails."""


class NumericalAbort(ArithmeticError):
    def __init__(self, message: str, interval_index: int) -> None:
        super().__init__(message)
        self.interval_index = interval_index


@dataclass(frozen=True)
class TopologySchedule:
    """Graph used on each sample interval: fixed, or ``graphs[k % m]``."""

    mode: Literal["fixed", "periodic"]
    graphs: tuple[DirectedGraph, ...]

    def __post_init__(self) -> None:
        graphs = tuple(self.graphs)
        if self.mode not in ("fixed", "periodic"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if not graphs:
            raise ValueError("schedule needs at least one graph")
        if self.mode == "fixed" and len(graphs) != 1:
            raise ValueError("fixed schedule takes exactly one graph")
        n = graphs[0].node_count
        if any(g.node_count != n for g in graphs):
            raise GraphDimensionError("all scheduled graphs must share the node count")
        object.__setattr__(self, "graphs", graphs)

    @classmethod
    def fixed(cls, g: DirectedGraph) -> TopologySchedule:
        return cls("fixed", (g,))

    @classmethod
    def periodic(cls, graphs: Sequence[DirectedGraph]) -> TopologySchedule:
        return cls("periodic", tuple(graphs))

    @property
    def period(self) -> int:
        return len(self.graphs)

    @property
    def node_count(self) -> int:
        return self.graphs[0].node_count

    def graph_at(self, k: int) -> DirectedGraph:
        return self.graphs[k % self.period]

    def union(self) -> DirectedGraph:
        return union_graph(self.graphs)

    def condition_satisfied(self) -> bool:
        """Spanning tree (fixed) or joint spanning tree over one period (periodic)."""
        return has_directed_spanning_tree(self.union())

    def period_product(self) -> NDArray[np.float64]:
        """``P(m-1) ... P(1) P(0)``: later intervals multiply on the left."""
        prod = np.eye(self.node_count)
        for g in self.graphs:
            prod = averaging_matrix(g).entries @ prod
        return prod

    def to_json(self) -> dict:
        return {"mode": self.mode, "graphs": [g.to_json() for g in self.graphs]}


@dataclass(frozen=True)
class Tolerances:
    stop: float = 1e-9
    """Both spreads at or below this end the run early."""
    consensus: float = 1e-6
    """Final spreads at or below this count as consensus achieved."""
    match_relative: float = 1e-6
    match_absolute: float = 1e-8


@dataclass(frozen=True, eq=False)
class ConsensusPrediction:
    """Final agreement ``x*(t) = intercept + (t - t0) slope``, ``v* = slope``."""

    weights: ConsensusWeights
    initial_time: float
    intercept: NDArray[np.float64]
    slope: NDArray[np.float64]

    @property
    def velocity(self) -> NDArray[np.float64]:
        return self.slope

    def position_at(self, t: float) -> NDArray[np.float64]:
        return self.intercept + (t - self.initial_time) * self.slope


@dataclass(eq=False)
class TrajectoryRecord:
    """Dense samples of a run: every instant plus intra-interval points."""

    times: NDArray[np.float64]
    positions: NDArray[np.float64]  # (S, N, n)
    velocities: NDArray[np.float64]
    controls: NDArray[np.float64]
    metadata: dict = field(default_factory=dict)

    def state(self, j: int) -> SwarmState:
        return SwarmState(self.times[j], self.positions[j], self.velocities[j])

    def __len__(self) -> int:
        return len(self.times)


@dataclass(eq=False)
class ConsensusReport:
    prediction: ConsensusPrediction | None
    prediction_error: str | None
    condition_satisfied: bool
    instant_times: NDArray[np.float64]
    disagreement_history: NDArray[np.float64]  # (K'+1, 2): position, velocity spread
    truncation_k: int
    stopped_early: bool
    residual_at_truncation: tuple[float, float]
    achieved: bool
    achieved_position: NDArray[np.float64]
    achieved_velocity: NDArray[np.float64]
    values_match: bool | None
    contraction_rate: float | None
    warnings: list[str] = field(default_factory=list)
    final_state: SwarmState | None = None

    def to_json(self) -> dict:
        pred = None
        if self.prediction is not None:
            pred = {
                "xi": self.prediction.weights.xi.tolist(),
                "position_intercept": self.prediction.intercept.tolist(),
                "position_slope": self.prediction.slope.tolist(),
                "velocity": self.prediction.velocity.tolist(),
                "position_at_truncation": self.prediction.position_at(
                    float(self.instant_times[-1])
                ).tolist(),
            }
        return {
            "predicted": pred,
            "prediction_error": self.prediction_error,
            "condition_satisfied": self.condition_satisfied,
            "achieved": self.achieved,
            "values_match": self.values_match,
            "achieved_consensus": {
                "time": float(self.instant_times[-1]),
                "position": self.achieved_position.tolist(),
                "velocity": self.achieved_velocity.tolist(),
            },
            "truncation_k": self.truncation_k,
            "stopped_early": self.stopped_early,
            "residual_at_truncation": {
                "position_spread": self.residual_at_truncation[0],
                "velocity_spread": self.residual_at_truncation[1],
            },
            "contraction_rate": self.contraction_rate,
            "disagreement_history": [
                {"t": float(t), "position_spread": float(p), "velocity_spread": float(v)}
                for t, (p, v) in zip(self.instant_times, self.disagreement_history)
            ],
            "warnings": list(self.warnings),
        }


def disagreement(state: SwarmState) -> tuple[float, float]:
    """Largest pairwise Euclidean distance in position and in velocity."""
    if state.agent_count < 2:
        return 0.0, 0.0
    return float(pdist(state.positions).max()), float(pdist(state.velocities).max())


def predicted_consensus(initial: SwarmState, schedule: TopologySchedule) -> ConsensusPrediction:
    """Consensus line from the left eigenvector of ``P`` (fixed) or of the period product.

    Raises:
        JointConditionError: the graph (or period product) is not SIA.
    """
    if schedule.node_count != initial.agent_count:
        raise GraphDimensionError("schedule and state disagree on the number of agents")
    if schedule.mode == "fixed":
        matrix = averaging_matrix(schedule.graphs[0]).entries
        condition = "directed spanning tree condition violated"
    else:
        matrix = schedule.period_product()
        condition = "joint spanning tree condition violated"
    try:
        w = consensus_weights(matrix)
    except NotSIAError as exc:
        raise JointConditionError(f"{condition}: {exc}", exc.multiplicity) from exc
    return ConsensusPrediction(
        w,
        initial.time,
        w.xi @ initial.positions,
        w.xi @ initial.velocities,
    )


def fit_contraction_rate(history: NDArray[np.float64], floor: float = 1e-13) -> float | None:
    """Per-interval geometric rate from a log-linear fit of the larger spread.

    Only the second half of the points above ``floor`` is used, so that
    transients do not bias the estimate.
    """
    spreads = np.max(history, axis=1)
    idx = np.flatnonzero(spreads > floor)
    if len(idx) < 3:
        return None
    idx = idx[len(idx) // 2 :]
    if len(idx) < 2:
        return None
    slope = np.polyfit(idx.astype(float), np.log(spreads[idx]), 1)[0]
    return float(math.exp(slope))


def _matches(achieved: NDArray, predicted: NDArray, tol: Tolerances) -> bool:
    err = np.abs(achieved - predicted)
    bound = np.maximum(tol.match_relative * np.abs(predicted), tol.match_absolute)
    return bool(np.all(err <= bound))


def run(
    initial: SwarmState,
    schedule: TopologySchedule,
    partition: TimePartition,
    tolerances: Tolerances = Tolerances(),
    dense: int = 20,
    horizon: float | None = None,
    seed: int | None = None,
) -> tuple[TrajectoryRecord, ConsensusReport]:
    """Propagate the closed loop interval by interval.

    Sample instants come from the discrete averaging map; ``dense`` extra
    points per interval come from the closed-form polynomials. After the
    last computed instant the agents coast with zero input; coast samples
    are recorded up to ``horizon`` (default: the settling time).

    Raises:
        NumericalAbort: a state became non-finite (gain overflow).
    """
    if schedule.node_count != initial.agent_count:
        raise GraphDimensionError(
            f"schedule has {schedule.node_count} nodes but state has {initial.agent_count} agents"
        )
    if dense < 0:
        raise ValueError("dense must be non-negative")
    if initial.time != partition.instants[0]:
        raise ValueError("initial state must be given at t_0")
    n_agents, dim = initial.agent_count, initial.dimension
    horizon = partition.settling_time if horizon is None else float(horizon)

    warnings: list[str] = []
    condition = schedule.condition_satisfied()
    if not condition:
        warnings.append(
            "no directed spanning tree"
            if schedule.mode == "fixed"
            else "no directed spanning tree in the union over one period"
        )
    prediction, prediction_error = None, None
    try:
        prediction = predicted_consensus(initial, schedule)
    except NotSIAError as exc:
        prediction_error = str(exc)

    times: list[float] = []
    xs: list[NDArray] = []
    vs: list[NDArray] = []
    us: list[NDArray] = []

    state = initial
    history = [disagreement(state)]
    stopped_early = False
    k = 0
    while True:
        spread = history[-1]
        if spread[0] <= tolerances.stop and spread[1] <= tolerances.stop:
            stopped_early = k < partition.k_max
            break
        if k == partition.k_max:
            break
        g = schedule.graph_at(k)
        interval = partition.interval(k)
        # overflow is detected explicitly below and turned into NumericalAbort
        with np.errstate(over="ignore", invalid="ignore"):
            snap = sample(state, g)
            for j in range(dense + 1):
                s = interval.length * j / (dense + 1)
                x, v = state_at_offset(state, snap, interval.length, s)
                times.append(interval.start + s)
                xs.append(x)
                vs.append(v)
                us.append(_control_at_offset(snap, interval.length, s))
            if not (np.all(np.isfinite(xs[-1])) and np.all(np.isfinite(us[-1]))):
                raise NumericalAbort(f"non-finite dense sample in interval {k}", k)
            try:
                state = discrete_step(state, g, interval, end_time=float(partition.instants[k + 1]))
            except StateError as exc:
                raise NumericalAbort(f"non-finite state after interval {k}: {exc}", k) from exc
        history.append(disagreement(state))
        k += 1

    # coast: u = 0 from the last instant on
    t_last = state.time
    times.append(t_last)
    xs.append(state.positions.copy())
    vs.append(state.velocities.copy())
    us.append(np.zeros((n_agents, dim)))
    if horizon > t_last:
        for j in range(1, dense + 2):
            s = (horizon - t_last) * j / (dense + 1)
            times.append(t_last + s)
            xs.append(state.positions + s * state.velocities)
            vs.append(state.velocities.copy())
            us.append(np.zeros((n_agents, dim)))

    hist = np.array(history)
    final_spread = (float(hist[-1, 0]), float(hist[-1, 1]))
    achieved = final_spread[0] <= tolerances.consensus and final_spread[1] <= tolerances.consensus
    mean_x = state.positions.mean(axis=0)
    mean_v = state.velocities.mean(axis=0)
    values_match = None
    if prediction is not None:
        values_match = _matches(mean_x, prediction.position_at(t_last), tolerances) and _matches(
            mean_v, prediction.velocity, tolerances
        )

    record = TrajectoryRecord(
        np.array(times),
        np.array(xs),
        np.array(vs),
        np.array(us),
        metadata={
            "partition": partition.to_json(),
            "schedule": schedule.to_json(),
            "seed": seed,
            "tolerances": {
                "stop": tolerances.stop,
                "consensus": tolerances.consensus,
                "match_relative": tolerances.match_relative,
                "match_absolute": tolerances.match_absolute,
            },
            "dense": dense,
            "horizon": horizon,
        },
    )
    report = ConsensusReport(
        prediction=prediction,
        prediction_error=prediction_error,
        condition_satisfied=condition,
        instant_times=partition.instants[: k + 1].copy(),
        disagreement_history=hist,
        truncation_k=k,
        stopped_early=stopped_early,
        residual_at_truncation=final_spread,
        achieved=achieved,
        achieved_position=mean_x,
        achieved_velocity=mean_v,
        values_match=values_match,
        contraction_rate=fit_contraction_rate(hist),
        warnings=warnings,
        final_state=state,
    )
    return record, report

