import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from numpy.polynomial import Polynomial

from fixedtime_consensus.control import (
    StateError,
    SwarmState,
    affine_coefficients,
    block_transition,
    control_input,
    control_inputs,
    discrete_step,
    discrete_step_per_agent,
    interval_limit,
    propagate_interval,
    sample,
)
from fixedtime_consensus.graph import DirectedGraph, averaging_matrix
from fixedtime_consensus.timeline import Interval, PartitionError, build_partition

LEADER = DirectedGraph.from_edges(2, [(1, 2)])
BIDIR = DirectedGraph.from_edges(2, [(1, 2), (2, 1)])
UNIT = Interval(0, 0.0, 1.0)


@st.composite
def scenarios(draw, max_agents=8, max_dim=3):
    n = draw(st.integers(1, max_agents))
    dim = draw(st.integers(1, max_dim))
    bits = draw(st.lists(st.booleans(), min_size=n * n, max_size=n * n))
    a = np.array(bits, dtype=np.int64).reshape(n, n)
    np.fill_diagonal(a, 0)
    vals = st.floats(-10, 10, allow_nan=False)
    x = draw(hnp.arrays(np.float64, (n, dim), elements=vals))
    v = draw(hnp.arrays(np.float64, (n, dim), elements=vals))
    start = draw(st.floats(0, 20))
    length = draw(st.floats(1e-3, 12.2))
    return SwarmState(start, x, v), DirectedGraph(a), Interval(0, start, length)


class TestSwarmState:
    def test_vector_input_becomes_column(self):
        s = SwarmState(0, [1, 2, 3], [0, 0, 0])
        assert s.positions.shape == (3, 1)

    def test_rejects_mismatch_and_nonfinite(self):
        with pytest.raises(StateError):
            SwarmState(0, [1, 2], [0, 0, 0])
        with pytest.raises(StateError):
            SwarmState(0, [1, np.nan], [0, 0])


class TestControlInput:
    def test_isolated_agent_has_zero_input(self):
        s = SwarmState(0, [1, 0], [3, -2])
        snap = sample(s, LEADER)
        for t in np.linspace(0, 0.99, 7):
            assert np.all(control_input(snap, 0, t, UNIT) == 0)

    def test_agreement_gives_zero_input(self):
        s = SwarmState(0, [2, 2], [1, 1])
        snap = sample(s, BIDIR)
        assert np.all(control_inputs(snap, UNIT, 0.3) == 0)

    def test_leader_follower_value(self):
        snap = sample(SwarmState(0, [1, 0], [0, 0]), LEADER)
        assert control_input(snap, 1, 0.0, UNIT)[0] == pytest.approx(3.0, abs=1e-15)

    def test_leader_follower_coefficients(self):
        snap = sample(SwarmState(0, [1, 0], [0, 0]), LEADER)
        a, b = affine_coefficients(snap, UNIT)
        assert a[1, 0] == pytest.approx(3.0) and b[1, 0] == pytest.approx(-6.0)

    def test_outside_interval(self):
        snap = sample(SwarmState(0, [1, 0], [0, 0]), LEADER)
        with pytest.raises(PartitionError):
            control_input(snap, 1, 1.0, UNIT)

    def test_snapshot_must_match_interval(self):
        snap = sample(SwarmState(0.5, [1, 0], [0, 0]), LEADER)
        with pytest.raises(PartitionError):
            control_input(snap, 1, 0.2, UNIT)

    def test_relative_sums_only(self):
        s = SwarmState(0, [[1.0], [0.0]], [[0.0], [0.0]])
        snap = sample(s, LEADER)
        assert snap.position_sums.tolist() == [[0.0], [-1.0]]
        assert snap.neighbor_counts.tolist() == [0, 1]


class TestPropagate:
    def test_start_is_unchanged(self):
        s = SwarmState(0, [1, 0], [0.5, -1])
        out = propagate_interval(s, LEADER, UNIT, 0.0)
        assert np.array_equal(out.positions, s.positions)
        assert np.array_equal(out.velocities, s.velocities)

    def test_consensus_moves_freely(self):
        s = SwarmState(0, [[1, 2], [1, 2]], [[0.5, -1], [0.5, -1]])
        out = propagate_interval(s, BIDIR, UNIT, 0.75)
        assert np.allclose(out.positions, [[1.375, 1.25]] * 2, atol=1e-15)
        assert np.array_equal(out.velocities, s.velocities)

    def test_leader_follower_limit(self):
        s = SwarmState(0, [1, 0], [0, 0])
        end = interval_limit(s, LEADER, UNIT)
        assert end.positions[:, 0] == pytest.approx([1, 0.5], abs=1e-15)
        assert end.velocities[:, 0] == pytest.approx([0, 0], abs=1e-15)
        near = propagate_interval(s, LEADER, UNIT, 1 - 1e-9)
        assert near.positions[1, 0] == pytest.approx(0.5, abs=1e-8)
        assert discrete_step(s, LEADER, UNIT).positions[:, 0] == pytest.approx([1, 0.5])

    def test_outside_interval(self):
        with pytest.raises(PartitionError):
            propagate_interval(SwarmState(0, [1, 0], [0, 0]), LEADER, UNIT, 1.0)

    def test_graph_size_checked(self):
        with pytest.raises(ValueError):
            propagate_interval(SwarmState(0, [1, 0, 2], [0, 0, 0]), LEADER, UNIT, 0.5)


class TestDiscreteStep:
    def test_bidirectional_average(self):
        out = discrete_step(SwarmState(0, [0, 2], [0, 0]), BIDIR, UNIT)
        assert out.positions[:, 0].tolist() == [1, 1]
        assert out.velocities[:, 0].tolist() == [0, 0]

    def test_consensus_fixed_point(self):
        s = SwarmState(0, [3, 3, 3], [1, 1, 1])
        g = DirectedGraph.from_edges(3, [(1, 2), (2, 3)])
        out = discrete_step(s, g, Interval(0, 0, 0.25))
        assert np.allclose(out.positions, 3.25) and np.allclose(out.velocities, 1)

    def test_leader_follower(self):
        out = discrete_step(SwarmState(0, [1, 0], [0, 0]), LEADER, UNIT)
        assert out.positions[:, 0].tolist() == [1, 0.5]
        assert out.velocities[:, 0].tolist() == [0, 0]

    @settings(max_examples=100, deadline=None)
    @given(scenarios())
    def test_per_agent_form_agrees(self, sc):
        s, g, iv = sc
        a, b = discrete_step(s, g, iv), discrete_step_per_agent(s, g, iv)
        assert np.allclose(a.stacked(), b.stacked(), rtol=0, atol=1e-12)

    def test_block_transition_powers(self):
        g = DirectedGraph.from_edges(4, [(1, 2), (2, 3), (3, 4), (4, 2)])
        part = build_partition(20, 8)
        p = averaging_matrix(g).entries
        rng = np.random.default_rng(0)
        s = SwarmState(0, rng.normal(size=(4, 2)), rng.normal(size=(4, 2)))
        state = s
        for k in range(8):
            state = discrete_step(state, g, part.interval(k))
            z = block_transition(g, part.lengths[k]) @ (s.stacked() if k == 0 else z)
            assert np.allclose(z, state.stacked(), atol=1e-12)
        pk = np.linalg.matrix_power(p, 8)
        t8 = part.instants[8]
        assert np.allclose(state.positions, pk @ s.positions + t8 * pk @ s.velocities, atol=1e-12)


class TestIdentities:
    @settings(max_examples=60, deadline=None)
    @given(scenarios(max_agents=5))
    def test_double_integral_of_input_matches_closed_form(self, sc):
        s, g, iv = sc
        snap = sample(s, g)
        a, b = affine_coefficients(snap, iv)
        ts = iv.start + iv.length * np.random.default_rng(1).random(100)
        for i in range(s.agent_count):
            for c in range(s.dimension):
                u = Polynomial([a[i, c], b[i, c]])
                v = u.integ(k=[s.velocities[i, c]])
                x = v.integ(k=[s.positions[i, c]])
                for t in ts:
                    if not iv.start <= t < iv.end:
                        continue
                    out = propagate_interval(s, g, iv, t)
                    off = t - iv.start
                    scale = 1 + abs(x(off)) + abs(v(off))
                    assert abs(out.positions[i, c] - x(off)) <= 1e-10 * scale
                    assert abs(out.velocities[i, c] - v(off)) <= 1e-10 * scale
                    assert control_inputs(snap, iv, t)[i, c] == pytest.approx(u(off), rel=1e-10, abs=1e-10)

    @settings(max_examples=300, deadline=None)
    @given(scenarios())
    def test_limit_equals_discrete_step(self, sc):
        s, g, iv = sc
        gap = np.max(np.abs(interval_limit(s, g, iv).stacked() - discrete_step(s, g, iv).stacked()))
        assert gap <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(scenarios(), st.floats(-50, 50))
    def test_translation_invariance(self, sc, c):
        s, g, iv = sc
        shifted = SwarmState(s.time, s.positions + c, s.velocities)
        t = iv.start + 0.37 * iv.length
        a, b = propagate_interval(s, g, iv, t), propagate_interval(shifted, g, iv, t)
        assert np.allclose(b.positions, a.positions + c, rtol=0, atol=1e-11 * (1 + abs(c)))
        assert np.allclose(b.velocities, a.velocities, rtol=0, atol=1e-11 * (1 + abs(c)))
        ua = control_inputs(sample(s, g), iv, t)
        ub = control_inputs(sample(shifted, g), iv, t)
        assert np.allclose(ua, ub, rtol=1e-9, atol=1e-9 * (1 + abs(c)) / iv.length**2)
