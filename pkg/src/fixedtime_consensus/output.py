"""File artifacts: trajectory CSV, JSON documents and plots."""

from __future__ import annotations

import csv
import io
import json
import threading
from pathlib import Path

import numpy as np

from .simulator import TrajectoryRecord


def _num(value: float) -> str:
    # 17 significant digits round-trip every double exactly
    return format(float(value), ".17g")


def trajectory_header(dimension: int) -> list[str]:
    cols = ["t", "agent"]
    for prefix in ("x", "v", "u"):
        cols += [f"{prefix}{c + 1}" for c in range(dimension)]
    return cols


def trajectory_csv(record: TrajectoryRecord) -> str:
    """One row per (sample, agent); agents are 1-based."""
    _, n_agents, dim = record.positions.shape
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_header(dim))
    for j, t in enumerate(record.times):
        for i in range(n_agents):
            row = [_num(t), str(i + 1)]
            row += [_num(x) for x in record.positions[j, i]]
            row += [_num(v) for v in record.velocities[j, i]]
            row += [_num(u) for u in record.controls[j, i]]
            w.writerow(row)
    return buf.getvalue()


def write_trajectory_csv(record: TrajectoryRecord, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(trajectory_csv(record))
    return path


def read_trajectory_csv(path: str | Path) -> TrajectoryRecord:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    dim = (len(header) - 2) // 3
    n_agents = max(int(r[1]) for r in body)
    samples = len(body) // n_agents
    data = np.array([[float(c) for c in r[2:]] for r in body]).reshape(samples, n_agents, 3 * dim)
    times = np.array([float(body[j * n_agents][0]) for j in range(samples)])
    return TrajectoryRecord(times, data[..., :dim], data[..., dim : 2 * dim], data[..., 2 * dim :])


def write_json(doc: dict, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, allow_nan=True) + "\n")
    return path


def write_gnuplot(csv_name: str, dimension: int, n_agents: int, path: str | Path) -> Path:
    """Gnuplot script drawing positions and velocities of each agent against time."""
    lines = [
        "set datafile separator ','",
        "set key outside right",
        "set xlabel 't (s)'",
        "set terminal svg size 900,700",
        f"set output '{Path(path).with_suffix('.svg').name}'",
        "set multiplot layout 2,1",
    ]
    for label, offset in (("position", 3), ("velocity", 3 + dimension)):
        lines.append(f"set ylabel '{label}'")
        curves = [
            f"'{csv_name}' skip 1 using 1:(column(2)=={i} ? column({offset}) : 1/0) "
            f"with lines title 'agent {i}'"
            for i in range(1, n_agents + 1)
        ]
        lines.append("plot " + ", \\\n     ".join(curves))
    lines.append("unset multiplot")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


_PLOT_LOCK = threading.Lock()


def write_svg(record: TrajectoryRecord, path: str | Path, settling_time: float | None = None) -> Path:
    """Positions and velocities (first coordinate) of each agent against time."""
    import matplotlib
    from matplotlib.figure import Figure

    path = Path(path)
    # rcParams are process-global; concurrent sweeps serialise here
    with _PLOT_LOCK, matplotlib.rc_context({"svg.hashsalt": "fixedtime-consensus"}):
        fig = Figure(figsize=(8, 7))
        ax_x, ax_v = fig.subplots(2, 1, sharex=True)
        for i in range(record.positions.shape[1]):
            ax_x.plot(record.times, record.positions[:, i, 0], lw=1.2, label=f"agent {i + 1}")
            ax_v.plot(record.times, record.velocities[:, i, 0], lw=1.2)
        for ax, label in ((ax_x, "position"), (ax_v, "velocity")):
            ax.set_ylabel(label)
            ax.grid(True, alpha=0.3)
            if settling_time is not None:
                ax.axvline(settling_time, color="k", ls="--", lw=0.8)
        ax_v.set_xlabel("t (s)")
        ax_x.legend(loc="upper left", ncol=3, fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path
