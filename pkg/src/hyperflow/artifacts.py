"""CSV and JSON artifacts written by the CLI."""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np

from hyperflow.flows import Trajectory
from hyperflow.invariants import q_invariants

logger = logging.getLogger(__name__)


def format_float(value: float) -> str:
    """Shortest-safe round-trip decimal: 17 significant digits."""
    return format(float(value), ".17g")


def trajectory_header(dim: int, with_q: bool = False) -> list:
    n = dim // 4
    header = ["t"] + [f"x{i + 1}" for i in range(dim)] + [f"rho{k + 1}" for k in range(n)]
    if with_q:
        header += ["Q2", "Q3"]
    return header


def write_trajectory_csv(
    traj: Trajectory, stream: TextIO, c: Optional[Sequence[float]] = None
) -> None:
    """One row per sample: t, x, rho and, when c is given on R^4, Q2 and Q3."""
    with_q = c is not None and traj.dim == 4
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(trajectory_header(traj.dim, with_q))
    radii = traj.radii()
    for t, x, rho in zip(traj.times, traj.states, radii):
        row = [t, *x, *rho]
        if with_q:
            row += list(q_invariants(x, c))
        writer.writerow([format_float(v) for v in row])


def trajectory_csv(traj: Trajectory, c: Optional[Sequence[float]] = None) -> str:
    buffer = io.StringIO()
    write_trajectory_csv(traj, buffer, c)
    return buffer.getvalue()


def trajectory_dict(traj: Trajectory) -> dict:
    return {
        "method": traj.method.value,
        "step": traj.step,
        "times": traj.times.tolist(),
        "states": traj.states.tolist(),
    }


def _default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def to_json(payload) -> str:
    """Deterministic JSON text (key order preserved, floats round-trip)."""
    return json.dumps(payload, indent=2, default=_default) + "\n"


def emit(text: str, name: str, out_dir: Optional[Path], stream: TextIO) -> Optional[Path]:
    """Write `text` to out_dir/name, or to `stream` when no directory is given."""
    if out_dir is None:
        stream.write(text)
        return None
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    logger.info("wrote %s", path)
    return path
