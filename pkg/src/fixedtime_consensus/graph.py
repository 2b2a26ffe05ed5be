"""Directed interaction graphs and the matrix analysis the protocol relies on.

Convention: ``adjacency[i, j] == 1`` means agent ``i`` receives information
from agent ``j`` (an edge ``j -> i``). Indices are 0-based in the API; the JSON
form uses 1-based agent labels.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray


class GraphDimensionError(ValueError):
    """Graphs (or matrices) that must share a node count do not."""


class NotSIAError(ValueError):
    """Eigenvalue 1 of a stochastic matrix is not simple.

    ``multiplicity`` is the geometric multiplicity of eigenvalue 1,
    estimated as ``N - rank(P - I)``.
    """

    def __init__(self, message: str, multiplicity: int) -> None:
        super().__init__(message)
        self.multiplicity = multiplicity


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """N-node directed topology with a 0/1 adjacency matrix."""

    adjacency: NDArray[np.int64]

    def __post_init__(self) -> None:
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise GraphDimensionError(f"adjacency must be a non-empty square matrix, got shape {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be exactly 0 or 1")
        if np.any(np.diag(a) != 0):
            raise ValueError("self-loops are not allowed (a_ii must be 0)")
        object.__setattr__(self, "adjacency", _frozen(a.astype(np.int64)))

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[Sequence[int]]) -> DirectedGraph:
        """Build from 1-based ``(from, to)`` pairs: ``to`` receives from ``from``."""
        if node_count < 1:
            raise ValueError("node_count must be positive")
        a = np.zeros((node_count, node_count), dtype=np.int64)
        for edge in edges:
            src, dst = (int(v) for v in edge)
            if not (1 <= src <= node_count and 1 <= dst <= node_count):
                raise ValueError(f"edge {list(edge)} outside node range 1..{node_count}")
            if src == dst:
                raise ValueError(f"self-loop {list(edge)} is not allowed")
            a[dst - 1, src - 1] = 1
        return cls(a)

    @classmethod
    def empty(cls, node_count: int) -> DirectedGraph:
        return cls(np.zeros((node_count, node_count), dtype=np.int64))

    @classmethod
    def from_json(cls, data: dict) -> DirectedGraph:
        return cls.from_edges(int(data["n"]), data.get("edges", []))

    def to_json(self) -> dict:
        return {"n": self.node_count, "edges": [list(e) for e in self.edges()]}

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def neighbor_counts(self) -> NDArray[np.int64]:
        """``|N_i|`` for every agent (row sums of the adjacency)."""
        return self.adjacency.sum(axis=1)

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]

    @cached_property
    def edge_index(self) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
        """0-based ``(receivers, senders)``, sorted by receiver then sender."""
        dst, src = np.nonzero(self.adjacency)
        return dst, src

    @cached_property
    def _averaging(self) -> AveragingMatrix:
        return _build_averaging(self)

    def edges(self) -> list[tuple[int, int]]:
        """1-based ``(from, to)`` pairs in row-major order of the receiver."""
        dst, src = np.nonzero(self.adjacency)
        return sorted((int(s) + 1, int(d) + 1) for s, d in zip(src, dst))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return bool(np.array_equal(self.adjacency, other.adjacency))

    def __hash__(self) -> int:
        return hash((self.node_count, self.adjacency.tobytes()))

    def __repr__(self) -> str:
        return f"DirectedGraph(n={self.node_count}, edges={self.edges()})"


@dataclass(frozen=True, eq=False)
class AveragingMatrix:
    """Row-stochastic matrix ``I - (D + I)^{-1} L`` of a graph."""

    entries: NDArray[np.float64]
    source: DirectedGraph = field(repr=False)

    @property
    def node_count(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class ConsensusWeights:
    """Nonnegative left eigenvector of a stochastic matrix at eigenvalue 1, summing to 1."""

    xi: NDArray[np.float64]


def laplacian(g: DirectedGraph) -> NDArray[np.float64]:
    a = g.adjacency.astype(np.float64)
    return np.diag(a.sum(axis=1)) - a


def averaging_matrix(g: DirectedGraph) -> AveragingMatrix:
    """Each agent averages itself and its neighbors with equal weight ``1/(|N_i|+1)``.

    The result is read-only and cached on the graph.
    """
    return g._averaging


def _build_averaging(g: DirectedGraph) -> AveragingMatrix:
    a = g.adjacency.astype(np.float64) + np.eye(g.node_count)
    # rows of ones divided by their own count sum to 1 up to one rounding per entry
    p = a / a.sum(axis=1, keepdims=True)
    return AveragingMatrix(_frozen(p), g)


def reachable_from(g: DirectedGraph, root: int) -> set[int]:
    """Nodes reachable from ``root`` along information-flow edges ``j -> i``."""
    out = g.adjacency.T  # out[j, i] == 1 iff j -> i
    seen = {root}
    queue = deque([root])
    while queue:
        j = queue.popleft()
        for i in np.flatnonzero(out[j]):
            i = int(i)
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return seen


def spanning_tree_roots(g: DirectedGraph) -> list[int]:
    """All 0-based nodes from which every node is reachable."""
    n = g.node_count
    return [r for r in range(n) if len(reachable_from(g, r)) == n]


def has_directed_spanning_tree(g: DirectedGraph) -> bool:
    n = g.node_count
    return any(len(reachable_from(g, r)) == n for r in range(n))


def union_graph(graphs: Sequence[DirectedGraph]) -> DirectedGraph:
    if not graphs:
        raise ValueError("union of an empty collection is undefined")
    n = graphs[0].node_count
    if any(g.node_count != n for g in graphs):
        raise GraphDimensionError(
            f"cannot unite graphs with node counts {[g.node_count for g in graphs]}"
        )
    a = np.zeros((n, n), dtype=np.int64)
    for g in graphs:
        a |= g.adjacency
    return DirectedGraph(a)


def eigenvalue_one_multiplicity(p: ArrayLike, tol: float | None = None) -> int:
    """Geometric multiplicity of eigenvalue 1, ``N - rank(P - I)``."""
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    if tol is None:
        tol = 1e-10 * max(1, n)
    return n - int(np.linalg.matrix_rank(p - np.eye(n), tol=tol))


def consensus_weights(
    p: AveragingMatrix | ArrayLike,
    residual_tol: float = 1e-10,
    max_power_iters: int = 100_000,
) -> ConsensusWeights:
    """Solve ``P^T xi = xi``, ``sum(xi) = 1`` for a stochastic matrix with simple eigenvalue 1.

    Accepts an :class:`AveragingMatrix` or any row-stochastic array (e.g. a
    product of averaging matrices over a switching period).

    Raises:
        NotSIAError: if eigenvalue 1 is not simple, i.e. the underlying graph
            has no directed spanning tree.
    """
    entries = p.entries if isinstance(p, AveragingMatrix) else np.asarray(p, dtype=np.float64)
    n = entries.shape[0]
    if entries.shape != (n, n):
        raise GraphDimensionError(f"expected a square matrix, got shape {entries.shape}")
    mult = eigenvalue_one_multiplicity(entries)
    if mult != 1:
        raise NotSIAError(
            f"matrix is not SIA: eigenvalue 1 has multiplicity {mult} "
            "(precondition failed: no directed spanning tree)",
            multiplicity=mult,
        )
    system = np.vstack([entries.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    xi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    xi = _clean_weights(xi)
    if np.max(np.abs(entries.T @ xi - xi)) > residual_tol:
        xi = _power_weights(entries, residual_tol, max_power_iters)
    return ConsensusWeights(_frozen(xi))


def _clean_weights(xi: NDArray) -> NDArray:
    xi = np.where(xi < 0, 0.0, xi)
    return xi / xi.sum()


def _power_weights(entries: NDArray, tol: float, max_iters: int) -> NDArray:
    n = entries.shape[0]
    xi = np.full(n, 1.0 / n)
    pt = entries.T
    for _ in range(max_iters):
        nxt = pt @ xi
        if np.max(np.abs(nxt - xi)) <= tol * 1e-2:
            return _clean_weights(nxt)
        xi = nxt
    raise NotSIAError("powers of P^T did not converge within budget", multiplicity=1)


def random_digraph(
    node_count: int,
    edge_probability: float,
    rng: np.random.Generator,
) -> DirectedGraph:
    """Each ordered pair ``(j, i)``, ``i != j``, is an edge independently with the given probability."""
    a = (rng.random((node_count, node_count)) < edge_probability).astype(np.int64)
    np.fill_diagonal(a, 0)
    return DirectedGraph(a)
