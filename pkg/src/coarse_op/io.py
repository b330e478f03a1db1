"""JSON file formats for spaces, operators and partitions; deterministic CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from coarse_op.lp_op.operator import LpOperator, format_p, parse_p
from coarse_op.pou import PartitionOfUnity
from coarse_op.space import MetricSpace, build_space, explicit_space


def load_json_arg(value: str) -> Any:
    """Parse ``value`` as inline JSON, or read it as a path to a JSON file."""
    text = value.strip()
    if text.startswith("{") or text.startswith("["):
        return json.loads(text)
    return json.loads(Path(value).read_text())


def p_to_json(p: float):
    return "inf" if math.isinf(p) else (int(p) if float(p).is_integer() else p)


# -- spaces ---------------------------------------------------------------------


def space_to_json(space: MetricSpace) -> dict:
    if space.provenance.get("type") and space.provenance.get("type") != "explicit":
        return {"type": space.provenance["type"], "params": dict(space.provenance.get("params", {}))}
    return {"type": "explicit", "matrix": space.dist.tolist()}


def space_from_json(spec: dict) -> MetricSpace:
    if spec.get("type") == "explicit":
        return explicit_space(spec["matrix"])
    return build_space(spec)


# -- operators --------------------------------------------------------------------


def operator_to_json(b: LpOperator) -> dict:
    entries = []
    for x, y, blk in b.blocks():
        entries.append([x, y, [[float(z.real), float(z.imag)] for z in blk.ravel()]])
    return {"p": p_to_json(b.p), "k": b.k, "space": space_to_json(b.space), "entries": entries}


def operator_from_json(data: dict, space: MetricSpace | None = None) -> LpOperator:
    k = int(data.get("k", 1))
    if space is None:
        space = space_from_json(data["space"])
    blocks = []
    for x, y, vals in data["entries"]:
        arr = np.array([complex(re, im) for re, im in vals]).reshape(k, k)
        blocks.append((int(x), int(y), arr))
    return LpOperator.from_blocks(space, parse_p(data["p"]), k, blocks)


# -- partitions --------------------------------------------------------------------


def partition_to_json(pou: PartitionOfUnity) -> dict:
    functions = []
    for i in range(pou.size):
        S = pou.support(i)
        functions.append({"support": S.tolist(), "values": pou.phi(i)[S].tolist()})
    return {"p": p_to_json(pou.p), "functions": functions}


def partition_from_json(data: dict, space: MetricSpace) -> PartitionOfUnity:
    import scipy.sparse as sp

    rows, cols, vals = [], [], []
    for i, fn in enumerate(data["functions"]):
        rows.extend(fn["support"])
        cols.extend([i] * len(fn["support"]))
        vals.extend(fn["values"])
    m = sp.csc_matrix((vals, (rows, cols)), shape=(space.n, len(data["functions"])))
    return PartitionOfUnity(space, parse_p(data["p"]), m)


# -- tables -------------------------------------------------------------------------


def format_value(v) -> str:
    """Stable text for CSV cells: repr for floats, lower-case booleans, '' for None."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (list, tuple)):
        return " ".join(format_value(x) for x in v)
    return str(v)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    if columns is None:
        columns = []
        for r in rows:
            for key in r:
                if key not in columns:
                    columns.append(key)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([format_value(r.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path: Path | str, rows: Iterable[dict], columns: Sequence[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(list(rows), columns))
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path: Path | str, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


__all__ = [
    "format_p",
    "format_value",
    "load_json_arg",
    "operator_from_json",
    "operator_to_json",
    "partition_from_json",
    "partition_to_json",
    "rows_to_csv",
    "space_from_json",
    "space_to_json",
    "write_csv",
    "write_json",
]
