"""Independent checks for the closed-form machinery.

* :func:`rk4_reference` integrates the closed loop numerically instead of
  using the interval polynomials.
* :func:`minimum_energy_certificate` solves the two-point boundary value
  problem of the double integrator directly and compares the result with
  the control law.
* :func:`matrix_power_limit` and :func:`product_over_period` iterate
  stochastic matrices to their rank-one limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .control import SwarmState, affine_coefficients, discrete_step, sample, state_at_offset
from .graph import AveragingMatrix, DirectedGraph
from .simulator import TopologySchedule, TrajectoryRecord
from .timeline import Interval, TimePartition


class OracleError(ValueError):
    pass


def rk4_integrate(
    f: Callable[[float, NDArray], NDArray],
    t0: float,
    y0: NDArray,
    h: float,
    steps: int,
) -> tuple[NDArray, NDArray]:
    """Classical fixed-step RK4. Returns all grid times and states."""
    ts = np.empty(steps + 1)
    ys = np.empty((steps + 1, *np.shape(y0)))
    t, y = t0, np.array(y0, dtype=np.float64)
    ts[0], ys[0] = t, y
    for j in range(1, steps + 1):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + j * h
        ts[j], ys[j] = t, y
    return ts, ys


def rk4_reference(
    initial: SwarmState,
    schedule: TopologySchedule,
    partition: TimePartition,
    steps_per_interval: int = 1000,
    intervals: int | None = None,
) -> TrajectoryRecord:
    """Integrate ``x' = v``, ``v' = u(t)`` with the control frozen on each interval's snapshot.

    Interval boundaries are grid points; the snapshot for interval ``k`` is
    taken from the RK4 state at ``t_k``.
    """
    if steps_per_interval < 100:
        raise OracleError("steps_per_interval must be at least 100")
    count = partition.k_max if intervals is None else min(intervals, partition.k_max)
    n = initial.agent_count
    y = initial.stacked()
    times = [initial.time]
    states = [y]
    controls = []
    for k in range(count):
        g = schedule.graph_at(k)
        interval = partition.interval(k)
        snap = sample(SwarmState(interval.start, y[:n], y[n:]), g)
        a, b = affine_coefficients(snap, interval)

        def rhs(t: float, z: NDArray, a=a, b=b, t0=interval.start) -> NDArray:
            return np.vstack([z[n:], a + b * (t - t0)])

        h = interval.length / steps_per_interval
        ts, ys = rk4_integrate(rhs, interval.start, y, h, steps_per_interval)
        if not np.all(np.isfinite(ys)):
            raise OracleError(f"non-finite RK4 state in interval {k}")
        times.extend(ts[1:])
        states.extend(ys[1:])
        controls.extend(a + b * (t - interval.start) for t in ts[:-1])
        y = ys[-1]
        times[-1] = float(partition.instants[k + 1])
    controls.append(np.zeros_like(y[:n]))
    arr = np.array(states)
    return TrajectoryRecord(
        np.array(times),
        arr[:, :n],
        arr[:, n:],
        np.array(controls),
        metadata={"method": "rk4", "steps_per_interval": steps_per_interval, "intervals": count},
    )


@dataclass(frozen=True, eq=False)
class MinimumEnergyCertificate:
    """Affine minimum-energy control ``u(t) = constant + slope (t - t_k)`` for one agent and interval."""

    interval_index: int
    agent: int | None
    constant: NDArray[np.float64]
    slope: NDArray[np.float64]
    energy: float
    deviation: float
    """Relative coefficient mismatch against the control law (nan without a reference)."""
    terminal_error: float
    """Absolute mismatch of the reproduced terminal state (nan without a target)."""

    def passed(self, relative_tol: float = 1e-10, terminal_tol: float = 1e-12) -> bool:
        dev_ok = np.isnan(self.deviation) or self.deviation <= relative_tol
        term_ok = np.isnan(self.terminal_error) or self.terminal_error <= terminal_tol
        return bool(dev_ok and term_ok)


def solve_minimum_energy(
    displacement: ArrayLike, velocity_change: ArrayLike, length: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Affine control that moves a double integrator by the given boundary offsets.

    ``displacement`` is ``x(t_{k+1}) - x(t_k) - D v(t_k)`` and
    ``velocity_change`` is ``v(t_{k+1}) - v(t_k)``. The costate of the
    velocity is affine in time, so the optimal control is affine and the
    boundary conditions pin it uniquely:

        dv = a D + b D^2 / 2,   dx = a D^2 / 2 + b D^3 / 6.
    """
    if not length > 0:
        raise OracleError(f"interval length must be positive, got {length!r}")
    dx = np.asarray(displacement, dtype=np.float64)
    dv = np.asarray(velocity_change, dtype=np.float64)
    d = length
    slope = (6.0 * d * dv - 12.0 * dx) / d**3
    constant = (6.0 * dx - 2.0 * d * dv) / d**2
    return constant, slope


def control_energy(constant: NDArray, slope: NDArray, length: float) -> float:
    """``integral_0^D |a + b s|^2 ds``."""
    d = length
    return float(np.sum(constant**2) * d + np.dot(constant, slope) * d**2 + np.sum(slope**2) * d**3 / 3.0)


def minimum_energy_certificate(
    start: tuple[ArrayLike, ArrayLike],
    end: tuple[ArrayLike, ArrayLike],
    interval: Interval,
    reference: tuple[ArrayLike, ArrayLike] | None = None,
    reference_scale: tuple[ArrayLike, ArrayLike] | None = None,
    agent: int | None = None,
) -> MinimumEnergyCertificate:
    """Certify the minimum-energy control between two boundary states.

    Args:
        start: ``(x, v)`` at ``t_k``.
        end: ``(x, v)`` at ``t_{k+1}``.
        interval: the sample interval.
        reference: optional ``(a, b)`` of a candidate affine control to compare.
        reference_scale: magnitudes used to normalise the coefficient
            mismatch; defaults to ``|reference|``.
    """
    if not interval.length > 0:
        raise OracleError(f"interval length must be positive, got {interval.length!r}")
    x0, v0 = (np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in start)
    x1, v1 = (np.atleast_1d(np.asarray(a, dtype=np.float64)) for a in end)
    d = interval.length
    a, b = solve_minimum_energy(x1 - x0 - d * v0, v1 - v0, d)
    return _certificate(interval, agent, a, b, (x0, v0), (x1, v1), reference, reference_scale)


def _certificate(interval, agent, a, b, start, target, reference, reference_scale):
    d = interval.length
    x0, v0 = start
    reached_x = x0 + d * v0 + a * d**2 / 2 + b * d**3 / 6
    reached_v = v0 + a * d + b * d**2 / 2
    terminal = float("nan")
    if target is not None:
        terminal = float(max(np.max(np.abs(reached_x - target[0])), np.max(np.abs(reached_v - target[1]))))
    deviation = float("nan")
    if reference is not None:
        ra, rb = (np.asarray(r, dtype=np.float64) for r in reference)
        sa, sb = (np.abs(ra), np.abs(rb)) if reference_scale is None else reference_scale
        deviation = max(_relative(a, ra, sa), _relative(b, rb, sb))
    return MinimumEnergyCertificate(
        interval.index, agent, a, b, control_energy(a, b, d), deviation, terminal
    )


def _relative(value: NDArray, ref: NDArray, scale: NDArray) -> float:
    err = np.abs(value - ref)
    scale = np.asarray(scale, dtype=np.float64)
    # zero reference with zero scale: only an exact zero passes
    out = np.where(scale > 0, err / np.where(scale > 0, scale, 1.0), np.where(err > 0, np.inf, 0.0))
    return float(np.max(out)) if out.size else 0.0


def certify_interval(
    state_at_tk: SwarmState,
    state_next: SwarmState,
    g: DirectedGraph,
    interval: Interval,
) -> list[MinimumEnergyCertificate]:
    """Certificates for every agent on one interval of a run.

    The terminal targets are the averaging conditions (each agent lands on
    the mean of itself and its neighbors). They are formed in each agent's
    own frame from the sampled relative sums, which keeps the boundary value
    solve free of cancellation against the absolute positions. The recovered
    control is compared with the control law's coefficients, and its double
    integral from the absolute start state is compared with ``state_next``.
    """
    snap = sample(state_at_tk, g)
    d = interval.length
    ex, ev = snap.position_error, snap.velocity_error
    ref_a, ref_b = affine_coefficients(snap, interval)
    scale_a = 6.0 * np.abs(ex) / d**2 + 4.0 * np.abs(ev) / d
    scale_b = 12.0 * np.abs(ex) / d**3 + 6.0 * np.abs(ev) / d**2
    certs = []
    for i in range(state_at_tk.agent_count):
        # x(t_{k+1}) - x(t_k) - D v(t_k) and v(t_{k+1}) - v(t_k) under averaging
        a, b = solve_minimum_energy(-ex[i] - d * ev[i], -ev[i], d)
        certs.append(
            _certificate(
                interval,
                i,
                a,
                b,
                (state_at_tk.positions[i], state_at_tk.velocities[i]),
                (state_next.positions[i], state_next.velocities[i]),
                (ref_a[i], ref_b[i]),
                (scale_a[i], scale_b[i]),
            )
        )
    return certs


def certify_run(
    initial: SwarmState,
    schedule: TopologySchedule,
    partition: TimePartition,
    intervals: int | None = None,
) -> list[MinimumEnergyCertificate]:
    """Replay the discrete map and certify every agent on every interval."""
    count = partition.k_max if intervals is None else min(intervals, partition.k_max)
    state = initial
    certs: list[MinimumEnergyCertificate] = []
    for k in range(count):
        g = schedule.graph_at(k)
        interval = partition.interval(k)
        nxt = discrete_step(state, g, interval, end_time=float(partition.instants[k + 1]))
        certs.extend(certify_interval(state, nxt, g, interval))
        state = nxt
    return certs


@dataclass(frozen=True, eq=False)
class ProductLimit:
    limit: NDArray[np.float64]
    xi_estimate: NDArray[np.float64]
    rate: float | None
    iterations: int
    converged: bool
    residuals: NDArray[np.float64]


def _rank_one_residual(m: NDArray) -> float:
    """Infinity norm of ``M - 1 mean_row(M)``."""
    return float(np.max(np.sum(np.abs(m - m.mean(axis=0, keepdims=True)), axis=1)))


def matrix_power_limit(
    p: AveragingMatrix | ArrayLike,
    tol: float = 1e-12,
    max_iters: int = 10_000,
) -> ProductLimit:
    """Iterate ``P^k`` until its rows agree within ``tol`` (infinity norm).

    A non-convergent result (``converged=False``) is returned, not raised,
    so callers can use it as a negative test.
    """
    entries = p.entries if isinstance(p, AveragingMatrix) else np.asarray(p, dtype=np.float64)
    if not np.allclose(entries.sum(axis=1), 1.0, rtol=0, atol=1e-12) or np.any(entries < 0):
        raise OracleError("matrix is not stochastic")
    power = entries.copy()
    residuals = [_rank_one_residual(power)]
    iterations = 1
    while residuals[-1] > tol and iterations < max_iters:
        power = power @ entries
        residuals.append(_rank_one_residual(power))
        iterations += 1
    converged = residuals[-1] <= tol
    res = np.array(residuals)
    xi = power.mean(axis=0)
    return ProductLimit(power, xi, _fit_rate(entries, xi) if converged else None, iterations, converged, res)


def _fit_rate(entries: NDArray, xi: NDArray, steps: int = 400) -> float:
    """Geometric decay rate of ``P^k - 1 xi^T`` per step.

    The raw residuals reach round-off within a few dozen powers, too early
    for Jordan blocks (``k rho^k``) or complex pairs to settle. Instead the
    deviation is iterated on its own, renormalised each step and projected
    back off the ``xi`` direction, and the successive residual ratios are
    averaged over the second half of ``steps``.
    """
    ones = np.ones(len(xi))
    dev = entries - np.outer(ones, xi)
    norm = _inf_norm(dev)
    if norm == 0:
        return 0.0
    logs = []
    for _ in range(steps):
        dev = dev / norm @ entries
        dev -= np.outer(dev @ ones, xi)
        new = _inf_norm(dev)
        if new <= 1e-13:
            # nilpotent on the deviation subspace: exact agreement in finitely many powers
            return 0.0
        logs.append(math.log(new))
        norm = new
    return float(math.exp(np.mean(logs[steps // 2 :])))


def _inf_norm(m: NDArray) -> float:
    return float(np.max(np.sum(np.abs(m), axis=1)))


def product_over_period(
    schedule: TopologySchedule, tol: float = 1e-12, max_iters: int = 10_000
) -> tuple[NDArray[np.float64], ProductLimit]:
    """Ordered product of one period's averaging matrices and the limit of its powers."""
    prod = schedule.period_product()
    return prod, matrix_power_limit(prod, tol=tol, max_iters=max_iters)


def second_eigenvalue_modulus(p: AveragingMatrix | ArrayLike) -> float:
    entries = p.entries if isinstance(p, AveragingMatrix) else np.asarray(p, dtype=np.float64)
    mods = np.sort(np.abs(np.linalg.eigvals(entries)))[::-1]
    return float(mods[1]) if len(mods) > 1 else 0.0


def max_deviation(a: TrajectoryRecord, b: TrajectoryRecord) -> float:
    """Largest state difference between two records sampled at the same times."""
    if a.positions.shape != b.positions.shape:
        raise OracleError("records are sampled differently")
    return float(max(np.max(np.abs(a.positions - b.positions)), np.max(np.abs(a.velocities - b.velocities))))


def closed_form_on_grid(
    initial: SwarmState,
    schedule: TopologySchedule,
    partition: TimePartition,
    steps_per_interval: int,
    intervals: int,
) -> TrajectoryRecord:
    """Closed-form states at the RK4 grid points, for direct comparison."""
    n = initial.agent_count
    state = initial
    times = [initial.time]
    xs, vs = [initial.positions], [initial.velocities]
    for k in range(min(intervals, partition.k_max)):
        g = schedule.graph_at(k)
        interval = partition.interval(k)
        snap = sample(state, g)
        h = interval.length / steps_per_interval
        for j in range(1, steps_per_interval):
            x, v = state_at_offset(state, snap, interval.length, j * h)
            times.append(interval.start + j * h)
            xs.append(x)
            vs.append(v)
        state = discrete_step(state, g, interval, end_time=float(partition.instants[k + 1]))
        times.append(state.time)
        xs.append(state.positions)
        vs.append(state.velocities)
    zeros = np.zeros((len(times), n, initial.dimension))
    return TrajectoryRecord(np.array(times), np.array(xs), np.array(vs), zeros, metadata={"method": "closed_form"})


__all__ = [
    "MinimumEnergyCertificate",
    "OracleError",
    "ProductLimit",
    "certify_interval",
    "certify_run",
    "closed_form_on_grid",
    "control_energy",
    "matrix_power_limit",
    "max_deviation",
    "minimum_energy_certificate",
    "product_over_period",
    "rk4_integrate",
    "rk4_reference",
    "second_eigenvalue_modulus",
    "solve_minimum_energy",
]
