"""Problem files, trace CSVs and event logs."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .block_norm import format_index
from .qp_model import BlockPartition, Box, QuadraticProblem

PROBLEM_FORMAT_VERSION = 1
TRACE_COLUMNS = ("k", "agent_id", "dist2", "dist_blockmax", "set_index")
EVENT_COLUMNS = ("k", "type", "i", "j", "compute_time")


class TraceFormatError(ValueError):
    pass


def problem_to_dict(problem: QuadraticProblem, meta: dict | None = None) -> dict:
    doc = {
        "format_version": PROBLEM_FORMAT_VERSION,
        "n": problem.n,
        "blocks": list(problem.partition.sizes),
        "Q": [float(v) for v in problem.Q.ravel()],
        "r": [float(v) for v in problem.r],
    }
    if problem.box is not None:
        doc["box"] = {"lower": problem.box.lower.tolist(), "upper": problem.box.upper.tolist()}
    if meta:
        doc["meta"] = meta
    return doc


def problem_from_dict(doc: dict) -> QuadraticProblem:
    version = doc.get("format_version")
    if version != PROBLEM_FORMAT_VERSION:
        raise ValueError(f"unsupported problem format_version {version!r}")
    n = int(doc["n"])
    Q = np.asarray(doc["Q"], dtype=float)
    if Q.size != n * n:
        raise ValueError(f"Q has {Q.size} entries, expected {n * n}")
    box = None
    if doc.get("box") is not None:
        box = Box(doc["box"]["lower"], doc["box"]["upper"])
    return QuadraticProblem(Q.reshape(n, n), doc["r"], BlockPartition(tuple(doc["blocks"])), box)


def write_problem(path, problem: QuadraticProblem, meta: dict | None = None):
    # json writes floats with repr(), the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(problem_to_dict(problem, meta), indent=1) + "\n")


def read_problem(path) -> QuadraticProblem:
    return problem_from_dict(json.loads(Path(path).read_text()))


def write_trace(path, trace):
    """One row per (tick, agent); ``set_index`` uses ``outside``/``converged``/``na`` markers."""
    H1, N = trace.dist2.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for k in range(H1):
            for i in range(N):
                s = None if trace.set_index is None else int(trace.set_index[k, i])
                w.writerow((k, i, repr(float(trace.dist2[k, i])), repr(float(trace.dist_blockmax[k, i])), format_index(s)))


def read_trace(path) -> dict[str, np.ndarray]:
    """Load a trace CSV into ``(horizon + 1, N)`` arrays keyed by column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise TraceFormatError(f"{path}: missing or wrong header, expected {','.join(TRACE_COLUMNS)}")
    body = rows[1:]
    if not body:
        raise TraceFormatError(f"{path}: trace has no rows")
    try:
        k = np.array([int(r[0]) for r in body])
        agent = np.array([int(r[1]) for r in body])
        d2 = np.array([float(r[2]) for r in body])
        dm = np.array([float(r[3]) for r in body])
    except (ValueError, IndexError) as exc:
        raise TraceFormatError(f"{path}: malformed row ({exc})") from exc
    N = int(agent.max()) + 1
    H1 = int(k.max()) + 1
    if len(body) != N * H1:
        raise TraceFormatError(f"{path}: expected {N * H1} rows for {H1} ticks x {N} agents, got {len(body)}")
    out = {"k": np.arange(H1), "dist2": np.full((H1, N), np.nan), "dist_blockmax": np.full((H1, N), np.nan)}
    out["dist2"][k, agent] = d2
    out["dist_blockmax"][k, agent] = dm
    if np.isnan(out["dist2"]).any():
        raise TraceFormatError(f"{path}: missing (k, agent) rows")
    return out


def write_events(path, events):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        w.writerows(events)
