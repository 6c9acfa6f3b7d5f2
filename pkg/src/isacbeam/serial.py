"""File formats: instances, solutions, search traces, and policy weights.

All documents are JSON with floats emitted at 17 significant digits, which is
enough for bit-exact reload of IEEE doubles; complex matrices are stored as
nested ``[re, im]`` pairs.  Traces are CSV (one row per search pass) with a
JSON metadata sidecar.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import BeamformingSolution, ProblemInstance, dbm_to_linear, linear_to_dbm

__all__ = [
    "dumps",
    "save_instance",
    "load_instance",
    "save_solution",
    "load_solution",
    "save_trace",
    "load_trace",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("t", "L", "U", "gap", "node_id", "depth", "k_star", "action")


# ---------------------------------------------------------------------------
# JSON emission with full float precision


def _format_float(x: float) -> str:
    if isinstance(x, float) and np.isfinite(x):
        return format(x, ".17g")
    return json.dumps(x)  # inf/nan would be invalid JSON; callers avoid them


def _emit(obj, out: list, indent: int, level: int):
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad_in}{json.dumps(str(k))}: ")
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        flat = all(isinstance(v, (int, float, bool, str, type(None))) for v in obj)
        if flat:
            out.append("[" + ", ".join(_scalar(v) for v in obj) + "]")
        else:
            out.append("[\n")
            for i, v in enumerate(obj):
                out.append(pad_in)
                _emit(v, out, indent, level + 1)
                out.append(",\n" if i < len(obj) - 1 else "\n")
            out.append(pad + "]")
    else:
        out.append(_scalar(obj))


def _scalar(v) -> str:
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _format_float(float(v))


def dumps(obj) -> str:
    """Serialize to JSON with floats at 17 significant digits."""
    out: list[str] = []
    _emit(_tolist(obj), out, indent=2, level=0)
    out.append("\n")
    return "".join(out)


def _tolist(obj):
    """Recursively convert numpy scalars/arrays to plain Python containers."""
    if isinstance(obj, np.ndarray):
        return _tolist(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _tolist(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tolist(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# complex array packing: nested [re, im] leaves


def pack_complex(a: np.ndarray):
    """Complex array -> nested lists with [re, im] pairs at the leaves."""
    a = np.asarray(a, dtype=complex)
    stacked = np.stack([a.real, a.imag], axis=-1)
    return stacked.tolist()


def unpack_complex(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex payload must have [re, im] leaves")
    return arr[..., 0] + 1j * arr[..., 1]


# ---------------------------------------------------------------------------
# instances


def save_instance(inst: ProblemInstance, path) -> None:
    doc = {
        "format": "isacbeam-instance",
        "K": inst.K,
        "Nt": inst.Nt,
        "Nr": inst.Nr,
        "L": inst.L,
        "P_T_dBm": inst.P_T_dBm,
        "sigmaC2": inst.sigmaC2,
        "sigmaS2": inst.sigmaS2,
        "rho": inst.rho,
        "channels": pack_complex(inst.channels),
        "seed": inst.seed,
        "scenario": inst.scenario,
    }
    Path(path).write_text(dumps(doc))


def load_instance(path) -> ProblemInstance:
    doc = json.loads(Path(path).read_text())
    return ProblemInstance(
        K=int(doc["K"]),
        Nt=int(doc["Nt"]),
        Nr=int(doc["Nr"]),
        L=int(doc["L"]),
        channels=unpack_complex(doc["channels"]),
        P_T=dbm_to_linear(float(doc["P_T_dBm"])),
        sigmaC2=float(doc["sigmaC2"]),
        sigmaS2=float(doc["sigmaS2"]),
        rho=float(doc["rho"]),
        seed=None if doc.get("seed") is None else int(doc["seed"]),
        scenario=None if doc.get("scenario") is None else int(doc["scenario"]),
    )


# ---------------------------------------------------------------------------
# solutions


def save_solution(sol: BeamformingSolution, path, *, objective: float,
                  sum_rate: float, crb: float, certified_gap: float | None = None,
                  gap_certified: bool = False, iterations: int | None = None,
                  status: str = "optimal", wall_time: float | None = None) -> None:
    doc = {
        "format": "isacbeam-solution",
        "objective": objective,
        "sum_rate": sum_rate,
        "crb": crb,
        "certified_gap": certified_gap,
        "gap_certified": gap_certified,
        "iterations": iterations,
        "status": status,
        "wall_time": wall_time,
        "Gamma": [float(g) for g in sol.Gamma],
        "R_X": pack_complex(sol.R_X),
        "W": pack_complex(sol.W),
        "w": None if sol.w is None else pack_complex(sol.w),
        "W_A_factor": None if sol.W_A_factor is None else pack_complex(sol.W_A_factor),
    }
    Path(path).write_text(dumps(doc))


def load_solution(path):
    """Load a solution file; returns (BeamformingSolution, metadata dict)."""
    doc = json.loads(Path(path).read_text())
    sol = BeamformingSolution(
        R_X=unpack_complex(doc["R_X"]),
        W=unpack_complex(doc["W"]),
        Gamma=np.asarray(doc["Gamma"], dtype=float),
        w=None if doc.get("w") is None else unpack_complex(doc["w"]),
        W_A_factor=(None if doc.get("W_A_factor") is None
                    else unpack_complex(doc["W_A_factor"])),
    )
    meta = {k: doc.get(k) for k in ("objective", "sum_rate", "crb", "certified_gap",
                                    "gap_certified", "iterations", "status",
                                    "wall_time")}
    return sol, meta


# ---------------------------------------------------------------------------
# search traces


@dataclass
class TraceRow:
    t: int
    L: float
    U: float
    gap: float
    node_id: int
    depth: int
    k_star: int
    action: str


def save_trace(rows, path, metadata: dict | None = None) -> None:
    """Write trace rows as CSV; metadata goes to ``<path>.meta.json``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for r in rows:
            writer.writerow([
                r.t, _format_float(float(r.L)), _format_float(float(r.U)),
                _format_float(float(r.gap)), r.node_id, r.depth, r.k_star,
                r.action,
            ])
    if metadata is not None:
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta_path.write_text(dumps(metadata))


def load_trace(path):
    """Read a trace CSV; returns (rows, metadata-or-None)."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace columns: {reader.fieldnames}")
        for rec in reader:
            rows.append(TraceRow(
                t=int(rec["t"]), L=float(rec["L"]), U=float(rec["U"]),
                gap=float(rec["gap"]), node_id=int(rec["node_id"]),
                depth=int(rec["depth"]), k_star=int(rec["k_star"]),
                action=rec["action"],
            ))
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else None
    return rows, meta
