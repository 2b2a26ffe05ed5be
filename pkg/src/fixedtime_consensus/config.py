"""Experiment configuration files (JSON, ``"schema": 1``)."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .control import SwarmState
from .graph import DirectedGraph, has_directed_spanning_tree, random_digraph
from .simulator import Tolerances, TopologySchedule
from .timeline import DEFAULT_K_MAX, K_MAX_CAP, TimePartition, build_partition


class ConfigError(ValueError):
    """Schema or consistency violation; ``field`` names the offending location."""

    def __init__(self, message: str, field: str = "") -> None:
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


_GRAPH = {
    "oneOf": [
        {
            "type": "object",
            "required": ["n"],
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "edges": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 1},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
            },
            "additionalProperties": False,
        },
        {
            "type": "object",
            "required": ["random"],
            "properties": {
                "random": {
                    "type": "object",
                    "required": ["n"],
                    "properties": {
                        "n": {"type": "integer", "minimum": 1},
                        "edge_probability": {"type": "number", "minimum": 0, "maximum": 1},
                        "require_spanning_tree": {"type": "boolean"},
                    },
                    "additionalProperties": False,
                }
            },
            "additionalProperties": False,
        },
    ]
}

_MATRIX = {
    "type": "array",
    "minItems": 1,
    "items": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]},
}

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema", "settling_time", "initial", "schedule"],
    "properties": {
        "schema": {"const": 1},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "settling_time": {"type": "number", "exclusiveMinimum": 0},
        "k_max": {"type": "integer"},
        "dimension": {"type": "integer", "minimum": 1},
        "initial": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["positions", "velocities"],
                    "properties": {"positions": _MATRIX, "velocities": _MATRIX},
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "required": ["random"],
                    "properties": {
                        "random": {
                            "type": "object",
                            "required": ["agents"],
                            "properties": {
                                "agents": {"type": "integer", "minimum": 1},
                                "scale": {"type": "number", "exclusiveMinimum": 0},
                            },
                            "additionalProperties": False,
                        }
                    },
                    "additionalProperties": False,
                },
            ]
        },
        "schedule": {
            "type": "object",
            "required": ["mode", "graphs"],
            "properties": {
                "mode": {"enum": ["fixed", "periodic"]},
                "graphs": {"type": "array", "minItems": 1, "items": _GRAPH},
            },
            "additionalProperties": False,
        },
        "tolerances": {
            "type": "object",
            "properties": {
                k: {"type": "number", "exclusiveMinimum": 0}
                for k in ("stop", "consensus", "match_relative", "match_absolute")
            },
            "additionalProperties": False,
        },
        "dense": {"type": "integer", "minimum": 0},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": ["integer", "null"]},
        "output": {
            "type": "object",
            "properties": {
                "dir": {"type": "string"},
                "plot": {"enum": ["svg", "gnuplot", "none"]},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    settling_time: float
    k_max: int
    initial: SwarmState
    schedule: TopologySchedule
    tolerances: Tolerances
    dense: int
    horizon: float | None
    seed: int | None
    output_dir: str | None
    plot: str
    source: dict

    def partition(self) -> TimePartition:
        return build_partition(self.settling_time, self.k_max)

    def with_overrides(
        self,
        k_max: int | None = None,
        stop_tol: float | None = None,
        dense: int | None = None,
        plot: str | None = None,
        output_dir: str | None = None,
    ) -> ExperimentConfig:
        cfg = self
        if k_max is not None:
            _check_k_max(k_max)
            cfg = replace(cfg, k_max=k_max)
        if stop_tol is not None:
            if not stop_tol > 0:
                raise ConfigError("must be positive", "--tol")
            cfg = replace(cfg, tolerances=replace(cfg.tolerances, stop=stop_tol))
        if dense is not None:
            if dense < 0:
                raise ConfigError("must be non-negative", "--dense")
            cfg = replace(cfg, dense=dense)
        if plot is not None:
            cfg = replace(cfg, plot=plot)
        if output_dir is not None:
            cfg = replace(cfg, output_dir=output_dir)
        return cfg


def _check_k_max(k_max: int) -> None:
    if not 1 <= k_max <= K_MAX_CAP:
        raise ConfigError(f"must be in 1..{K_MAX_CAP}, got {k_max}", "k_max")


def _rows(values: list, dimension: int, where: str) -> np.ndarray:
    a = np.array(values, dtype=np.float64)
    if a.ndim == 1:
        if dimension != 1:
            raise ConfigError(f"flat list given but dimension is {dimension}", where)
        a = a[:, None]
    if a.ndim != 2 or a.shape[1] != dimension:
        raise ConfigError(f"expected N x {dimension} values, got shape {a.shape}", where)
    if not np.all(np.isfinite(a)):
        raise ConfigError("values must be finite", where)
    return a


def _graph(spec: dict, rng: np.random.Generator, where: str) -> DirectedGraph:
    if "random" in spec:
        r = spec["random"]
        prob = r.get("edge_probability", 0.3)
        for _ in range(10_000):
            g = random_digraph(r["n"], prob, rng)
            if not r.get("require_spanning_tree", False) or has_directed_spanning_tree(g):
                return g
        raise ConfigError("could not draw a graph with a spanning tree", where)
    try:
        return DirectedGraph.from_json(spec)
    except ValueError as exc:
        raise ConfigError(str(exc), where) from exc


def parse_config(data: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(exc.message, where) from exc

    seed = data.get("seed")
    rng = np.random.default_rng(seed)
    k_max = data.get("k_max", DEFAULT_K_MAX)
    _check_k_max(k_max)
    dim = data.get("dimension", 1)

    init = data["initial"]
    if "random" in init:
        n_agents = init["random"]["agents"]
        scale = init["random"].get("scale", 5.0)
        x = rng.uniform(-scale, scale, (n_agents, dim))
        v = rng.uniform(-scale, scale, (n_agents, dim))
    else:
        x = _rows(init["positions"], dim, "initial/positions")
        v = _rows(init["velocities"], dim, "initial/velocities")
        if x.shape != v.shape:
            raise ConfigError("positions and velocities disagree in agent count", "initial")
    initial = SwarmState(0.0, x, v)

    sched = data["schedule"]
    graphs = [_graph(g, rng, f"schedule/graphs/{i}") for i, g in enumerate(sched["graphs"])]
    for i, g in enumerate(graphs):
        if g.node_count != initial.agent_count:
            raise ConfigError(
                f"graph has {g.node_count} nodes but there are {initial.agent_count} agents",
                f"schedule/graphs/{i}",
            )
    if sched["mode"] == "fixed" and len(graphs) != 1:
        raise ConfigError("fixed mode takes exactly one graph", "schedule/graphs")
    schedule = TopologySchedule(sched["mode"], tuple(graphs))

    tol = Tolerances(**data.get("tolerances", {}))
    output = data.get("output", {})
    return ExperimentConfig(
        name=data.get("name", "experiment"),
        settling_time=float(data["settling_time"]),
        k_max=k_max,
        initial=initial,
        schedule=schedule,
        tolerances=tol,
        dense=data.get("dense", 20),
        horizon=data.get("horizon"),
        seed=seed,
        output_dir=output.get("dir"),
        plot=output.get("plot", "svg"),
        source=data,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", str(path)) from exc
    return parse_config(data)


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``"six_agent_switching"``."""
    return Path(__file__).parent / "configs" / f"{name}.json"
