"""Config-driven experiment runner.

A config names an experiment kind, a space, an operator recipe and parameter
grids.  The grids expand into independent cells; each cell draws its
randomness from a stream derived from (master seed, cell index), so the
output does not depend on how many workers evaluate the cells.  Tables go to
CSV in cell order; wall times and the resolved config go to a JSON manifest.
"""

from __future__ import annotations

import itertools
import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from coarse_op import io as cio
from coarse_op.lp_op.generators import (
    ContractionError,
    multiplication_operator,
    neumann_quasilocal,
    normalized,
    random_band,
    shift_operator,
    tridiagonal,
)
from coarse_op.lp_op.operator import LpOperator, parse_p
from coarse_op.space import SPACE_TYPES, MetricError, MetricSpace

KINDS = ("approx", "onl", "qlocalise", "sparsify", "inverse", "property-a-sweep", "norms")
OPERATOR_TYPES = ("file", "diagonal", "identity", "random_band", "tridiagonal", "shift", "neumann")
APPROX_METHODS = ("truncate", "end", "mid", "schedule")
CONFIG_KEYS = ("kind", "space", "operator", "grids", "params", "seed", "out", "replicates")
NEEDS_OPERATOR = ("approx", "onl", "qlocalise", "inverse", "norms")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    kind: str
    space: dict | None = None
    operator: dict | None = None
    grids: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None
    replicates: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = sorted(set(data) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"unknown config field(s) {unknown}; allowed: {list(CONFIG_KEYS)}")
        if "kind" not in data:
            raise ConfigError("kind: missing")
        return cls(**{k: data[k] for k in CONFIG_KEYS if k in data})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())


# -- seeding ---------------------------------------------------------------------


def stream_seed(master: int, name: str, *index: int) -> int:
    """A 32-bit seed for the named stream, independent of scheduling."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(name.encode()), *map(int, index)])
    return int(ss.generate_state(1)[0])


# -- validation ---------------------------------------------------------------------


def _number_list(value) -> bool:
    return isinstance(value, list) and all(
        isinstance(v, (int, float)) or v in ("inf", "auto") for v in value)


def validate(config: ExperimentConfig | dict) -> list[str]:
    """Schema and cross-field diagnostics; empty for a well-formed config."""
    if isinstance(config, dict):
        try:
            config = ExperimentConfig.from_dict(config)
        except ConfigError as exc:
            return [str(exc)]
    diags = []
    if config.kind not in KINDS:
        diags.append(f"kind: unknown experiment kind {config.kind!r}; allowed: {list(KINDS)}")
    space = config.space
    op = config.operator or {}
    if space is None and op.get("type") != "file":
        diags.append("space: missing")
    elif space is not None:
        if not isinstance(space, dict) or space.get("type") not in SPACE_TYPES:
            diags.append(f"space.type: expected one of {list(SPACE_TYPES)}")
    if config.kind in NEEDS_OPERATOR and not config.operator:
        diags.append(f"operator: required for kind {config.kind!r}")
    op_p = None
    if config.operator:
        if op.get("type") not in OPERATOR_TYPES:
            diags.append(f"operator.type: expected one of {list(OPERATOR_TYPES)}")
        try:
            op_p = parse_p(op.get("p", 2))
        except ValueError as exc:
            diags.append(f"operator.p: {exc}")
    if not isinstance(config.grids, dict):
        diags.append("grids: expected an object of lists")
    else:
        for key, value in config.grids.items():
            if not _number_list(value) and key != "weights":
                diags.append(f"grids.{key}: expected a list of numbers")
    pou_p = config.params.get("pou_p")
    if pou_p is not None and op_p is not None:
        try:
            if parse_p(pou_p) != op_p:
                diags.append(f"params.pou_p: partition exponent {pou_p} does not match "
                             f"operator p {op.get('p', 2)}")
        except ValueError as exc:
            diags.append(f"params.pou_p: {exc}")
    method = config.params.get("method")
    if config.kind == "approx" and method is not None and method not in APPROX_METHODS:
        diags.append(f"params.method: expected one of {list(APPROX_METHODS)}")
    if not isinstance(config.seed, int) or isinstance(config.seed, bool):
        diags.append("seed: expected an integer")
    if not isinstance(config.replicates, int) or config.replicates < 1:
        diags.append("replicates: expected a positive integer")
    return diags


# -- construction ---------------------------------------------------------------------


def build_space_spec(spec: dict) -> MetricSpace:
    return cio.space_from_json(spec)


def build_operator(spec: dict, space: MetricSpace | None, seed: int) -> LpOperator:
    kind = spec.get("type")
    params = spec.get("params", {})
    p = spec.get("p", 2)
    k = int(spec.get("k", 1))
    if kind == "file":
        data = json.loads(Path(params["path"]).read_text())
        b = cio.operator_from_json(data)
    elif kind == "identity":
        b = LpOperator.identity(space, p, k)
    elif kind == "diagonal":
        if "values" in params:
            vals = np.asarray(params["values"], dtype=float)
        else:
            vals = np.random.default_rng(seed).random(space.n)
        b = multiplication_operator(space, vals, p)
    elif kind == "random_band":
        b = random_band(space, float(params.get("r", 1)), float(params.get("density", 1.0)),
                        float(params.get("magnitude", 1.0)), seed, p, k,
                        bool(params.get("real", False)))
    elif kind == "tridiagonal":
        b = tridiagonal(space, params.get("diag", 0.0), params.get("lower", 1.0),
                        params.get("upper", 1.0), p)
    elif kind == "shift":
        b = shift_operator(space, p, k)
    elif kind == "neumann":
        base = build_operator(params["base"], space, seed)
        b = neumann_quasilocal(base.space, base, float(params["lam"]))
    else:
        raise ConfigError(f"operator.type: unknown operator type {kind!r}; "
                          f"allowed: {list(OPERATOR_TYPES)}")
    if params.get("normalize"):
        b = normalized(b)
    return b


# -- cells --------------------------------------------------------------------------


def _grid(config: ExperimentConfig, key: str, default):
    values = config.grids.get(key)
    return list(values) if values else list(default)


def expand_cells(config: ExperimentConfig) -> list[dict]:
    """Parameter cells in deterministic order: replicate-major, then grid order."""
    kind = config.kind
    axes: dict[str, list] = {}
    if kind == "norms":
        axes["p"] = _grid(config, "p", [None])
    elif kind == "approx":
        method = config.params.get("method", "truncate")
        if method == "schedule":
            axes["eps"] = _grid(config, "eps", [0.2])
        else:
            axes["method"] = [method]
    elif kind == "onl":
        axes["S"] = _grid(config, "S", [1, 2, 4, 8])
    elif kind == "qlocalise":
        axes["eps"] = _grid(config, "eps", [0.05])
        axes["L"] = _grid(config, "L", ["auto"])
    elif kind == "sparsify":
        axes["m"] = _grid(config, "m", [2])
        axes["c"] = _grid(config, "c", [0.5])
        axes["weights"] = _grid(config, "weights", ["uniform"])
    elif kind == "inverse":
        axes["delta"] = _grid(config, "delta", [config.params.get("delta", 0.3)])
    elif kind == "property-a-sweep":
        axes["p"] = _grid(config, "p", [2])
    names = list(axes)
    cells = []
    for rep in range(config.replicates):
        for values in itertools.product(*(axes[n] for n in names)):
            cells.append({"replicate": rep, **dict(zip(names, values))})
    for i, cell in enumerate(cells):
        cell["index"] = i
    return cells


def _with_p(spec: dict, p) -> dict:
    return spec if p is None else {**spec, "p": p}


def _cell_norms(config, cell, space, seed):
    from coarse_op.lp_op.norms import opnorm

    b = build_operator(_with_p(config.operator, cell["p"]), space, seed)
    est = opnorm(b, tol=float(config.params.get("tol", 1e-10)))
    if not est.lower <= est.upper * (1 + 1e-12) + 1e-15:
        raise AssertionError(f"norm bracket inverted: lower {est.lower} > upper {est.upper}")
    return {"norms": [{"p": cio.p_to_json(b.p), "n": b.n, "k": b.k, "blocks": b.block_count(),
                       "lower": est.lower, "upper": est.upper, "method": est.method,
                       "converged": est.converged}]}


def _cell_approx(config, cell, space, seed):
    from coarse_op.approx import roe_curve, schedule_approximant

    b = build_operator(config.operator, space, seed)
    if "eps" in cell:
        rep = schedule_approximant(b, float(cell["eps"]))
        row = rep.as_dict()
        row["defect_ok"] = rep.defect <= rep.eps
        row["contraction_ok"] = rep.approx_norm <= rep.M + 1e-8
        if not row["defect_ok"]:
            raise AssertionError(f"schedule approximant defect {rep.defect} exceeds eps {rep.eps}")
        if not row["contraction_ok"]:
            raise AssertionError(f"approximant norm {rep.approx_norm} exceeds ||b|| = {rep.M}")
        return {"schedule": [row]}
    method = {"truncate": "truncate", "end": "pou_end", "mid": "pou_mid"}[cell["method"]]
    eps = sorted((float(e) for e in _grid(config, "eps", [1.0, 0.1, 0.01])), reverse=True)
    ladder = config.grids.get("R") or config.grids.get("S")
    curve = roe_curve(b, eps, [method], ladder=ladder)
    return {"curve": [{"eps": r.eps, "R": r.R, "defect": r.defect, "method": r.method,
                       "reached": r.reached} for r in curve]}


def _cell_onl(config, cell, space, seed):
    from coarse_op.locality import onl_search

    b = build_operator(config.operator, space, seed)
    res = onl_search(b, float(cell["S"]))
    if res.value > res.reference * (1 + 1e-9) + 1e-12 and b.p in (1.0, 2.0, math.inf):
        raise AssertionError(f"window value {res.value} exceeds ||b|| = {res.reference}")
    return {"onl": [{"S": cell["S"], "value_lower": res.value, "norm_lower": res.reference,
                     "ratio": res.ratio, "support_diameter": res.support_diameter,
                     "centre": res.meta["centre"]}]}


def _cell_qlocalise(config, cell, space, seed):
    from coarse_op.lp_op.commut import lipschitz_for_commut
    from coarse_op.locality import ql_localise

    b = build_operator(config.operator, space, seed)
    eps = float(cell["eps"])
    L = lipschitz_for_commut(b, eps) if cell["L"] == "auto" else float(cell["L"])
    if math.isinf(L):
        L = 1.0
    res = ql_localise(b, L, eps)
    meta = res.meta
    return {"qlocalise": [{"eps": eps, "L": L, "m": meta["m"], "c": meta["c"],
                           "value": res.value, "norm_lower": res.reference,
                           "support_diameter": res.support_diameter, "f_bound": meta["f_bound"],
                           "fraction": meta["fraction"],
                           "sparsify_success": meta["sparsify_success"],
                           "certified": meta["certified"], "conclusion": meta["conclusion"]}]}


def _weights(name, space, seed) -> np.ndarray:
    if name == "uniform":
        return np.ones(space.n)
    if name == "random":
        return np.random.default_rng(seed).random(space.n)
    if name == "single-atom":
        w = np.zeros(space.n)
        w[np.random.default_rng(seed).integers(space.n)] = 1.0
        return w
    return np.asarray(cio.load_json_arg(name), dtype=float)


def _cell_sparsify(config, cell, space, seed):
    from coarse_op.locality import sparsify

    w = _weights(cell["weights"], space, seed)
    res = sparsify(space, w, int(cell["m"]), float(cell["c"]),
                   config.params.get("strategy", "auto"))
    res.verify(space)
    if res.guarantee is not None and res.fraction < res.guarantee - 1e-12:
        raise AssertionError(f"grid sparsification fraction {res.fraction} is below the "
                             f"averaging bound {res.guarantee}")
    return {"sparsify": [{"m": cell["m"], "c": cell["c"], "weights": cell["weights"],
                          "strategy": res.strategy, "box_side": res.box_side,
                          "guarantee": res.guarantee, "fraction": res.fraction,
                          "components": len(res.components),
                          "diameter_bound": res.diameter_bound, "success": res.success}]}


def _cell_inverse(config, cell, space, seed):
    from coarse_op.locality import inverse_experiment

    a = build_operator(config.operator, space, seed)
    eps = sorted((float(e) for e in _grid(config, "eps", [1.0, 0.1, 0.01])), reverse=True)
    R_grid = _grid(config, "R", range(1, 21))
    rep = inverse_experiment(a, float(cell["delta"]), eps, R_grid)
    profile = [{"delta": cell["delta"], **row} for row in rep.rows()]
    exact = [r for r in profile if r["tag"] == "exact"]
    bad = [r for r in exact if not r["below_envelope"]]
    if bad:
        raise AssertionError(f"exact profile above the geometric envelope at R = {bad[0]['R']}")
    curve = [{"delta": cell["delta"], "eps": r.eps, "R": r.R, "defect": r.defect,
              "method": r.method} for r in rep.curve]
    summary = [{"delta": cell["delta"], "residual": rep.residual,
                "rate_measured": rep.rate_measured, "rate_predicted": rep.rate_predicted}]
    return {"profile": profile, "curve": curve, "summary": summary}


def _cell_property_a(config, cell, space, seed):
    from coarse_op.locality import property_a_report

    rows = property_a_report(space, _grid(config, "r", [1, 2, 4]), _grid(config, "S", [2, 4, 8]),
                             cell["p"], seed=seed, operators=int(config.params.get("operators", 3)))
    return {"property_a": [{"p": cell["p"], **r} for r in rows]}


_CELL_RUNNERS = {
    "norms": _cell_norms,
    "approx": _cell_approx,
    "onl": _cell_onl,
    "qlocalise": _cell_qlocalise,
    "sparsify": _cell_sparsify,
    "inverse": _cell_inverse,
    "property-a-sweep": _cell_property_a,
}


def run_cell(config_dict: dict, cell: dict) -> tuple[dict, float]:
    """Evaluate one cell; returns (tables, wall time).  Top level so worker processes can pickle it."""
    config = ExperimentConfig.from_dict(config_dict)
    start = time.perf_counter()
    space = build_space_spec(config.space) if config.space else None
    seed = stream_seed(config.seed, "operator", cell["replicate"])
    tables = _CELL_RUNNERS[config.kind](config, cell, space, seed)
    for rows in tables.values():
        for row in rows:
            row.setdefault("cell", cell["index"])
            row.setdefault("replicate", cell["replicate"])
    return tables, time.perf_counter() - start


@dataclass
class RunResult:
    tables: dict[str, list[dict]]
    files: list[Path]
    manifest: dict


def run(config: ExperimentConfig, out: str | Path | None = None, jobs: int = 1) -> RunResult:
    """Execute every cell, write ``<table>.csv`` files and ``manifest.json``.

    Raises ConfigError for invalid configs, ContractionError/MetricError for
    violated preconditions and AssertionError for violated invariants.
    """
    diags = validate(config)
    if diags:
        raise ConfigError("; ".join(diags))
    cells = expand_cells(config)
    cfg = config.to_dict()
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, [cfg] * len(cells), cells))
    else:
        results = [run_cell(cfg, cell) for cell in cells]
    tables: dict[str, list[dict]] = {}
    for cell_tables, _ in results:
        for name, rows in cell_tables.items():
            tables.setdefault(name, []).extend(rows)
    files = []
    out_dir = Path(out or config.out or ".")
    for name in sorted(tables):
        files.append(cio.write_csv(out_dir / f"{name}.csv", tables[name]))
    manifest = {
        "config": cfg,
        "cells": [{**cell, "wall_time": wall} for cell, (_, wall) in zip(cells, results)],
        "tables": {name: len(rows) for name, rows in sorted(tables.items())},
    }
    files.append(cio.write_json(out_dir / "manifest.json", manifest))
    return RunResult(tables, files, manifest)


__all__ = [
    "APPROX_METHODS",
    "ConfigError",
    "ContractionError",
    "ExperimentConfig",
    "KINDS",
    "MetricError",
    "RunResult",
    "build_operator",
    "expand_cells",
    "run",
    "run_cell",
    "stream_seed",
    "validate",
]
