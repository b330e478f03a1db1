"""Command-line entry point: ``coarse-op <subcommand> [--config file.json] [--seed N] [--out dir] [--jobs K]``.

Exit codes: 0 success, 1 a checked invariant failed, 2 invalid configuration
or violated precondition.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from coarse_op import io as cio
from coarse_op.experiments import ConfigError, ExperimentConfig, run, validate
from coarse_op.lp_op.generators import ContractionError
from coarse_op.space import MetricError, geometry_profile

OUT_ENV = "COARSE_OP_OUT"


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "coarse_op_out")


def _floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    return [float(t) for t in text.replace(",", " ").split()]


def _exponents(text: str) -> list:
    out = []
    for t in text.replace(",", " ").split():
        out.append("inf" if t.lower() in ("inf", "infinity") else float(t))
    return out


def _load_config(path: str | None, kind: str) -> dict:
    if path is None:
        return {"kind": kind}
    data = json.loads(Path(path).read_text())
    data.setdefault("kind", kind)
    return data


def _operator_spec(op: str | None) -> dict | None:
    if op is None:
        return None
    text = op.strip()
    if text.startswith("{"):
        return json.loads(text)
    return {"type": "file", "params": {"path": op}}


def _execute(data: dict, seed: int | None, out: str | None, jobs: int) -> None:
    if seed is not None:
        data["seed"] = seed
    try:
        config = ExperimentConfig.from_dict(data)
        diags = validate(config)
        if diags:
            raise ConfigError("; ".join(diags))
        result = run(config, out or config.out or _default_out(), jobs=jobs)
    except (ConfigError, ContractionError, MetricError, ValueError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except AssertionError as exc:
        click.echo(f"invariant violated: {exc}", err=True)
        sys.exit(1)
    for path in result.files:
        click.echo(str(path))


def common(f):
    f = click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes.")(f)
    f = click.option("--out", type=click.Path(), default=None,
                     help=f"Output directory (default ${OUT_ENV} or ./coarse_op_out).")(f)
    f = click.option("--seed", type=int, default=None, help="Master seed.")(f)
    f = click.option("--config", type=click.Path(exists=True), default=None,
                     help="Experiment config (JSON).")(f)
    return f


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Finite-scale quasi-locality experiments on l^p operators over metric spaces."""


# -- space ----------------------------------------------------------------------------


@main.group()
def space():
    """Metric space files."""


@space.command("gen")
@click.option("--spec", required=True, help="Inline JSON or a path to a space spec.")
@click.option("--out", type=click.Path(), default=None)
@click.option("--R-grid", "r_grid", default="1 2 4 8", show_default=True)
def space_gen(spec, out, r_grid):
    """Validate a space spec, write it with its geometry profile."""
    try:
        s = cio.space_from_json(cio.load_json_arg(spec))
    except (MetricError, ValueError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    out_dir = Path(out or _default_out())
    radii = sorted(_floats(r_grid))
    rows = [{"R": R, "profile": c} for R, c in zip(radii, geometry_profile(s, radii))]
    click.echo(str(cio.write_json(out_dir / "space.json", cio.space_to_json(s))))
    click.echo(str(cio.write_csv(out_dir / "geometry.csv", rows)))


# -- operators -----------------------------------------------------------------------------


@main.group()
def op():
    """Operator files and norms."""


@op.command("gen")
@click.option("--space", "space_spec", required=True, help="Inline JSON or a space file.")
@click.option("--type", "op_type", default="random_band", show_default=True)
@click.option("--params", default="{}", help="Inline JSON generator parameters.")
@click.option("--p", default="2", show_default=True)
@click.option("--k", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Operator JSON path.")
def op_gen(space_spec, op_type, params, p, k, seed, out):
    """Build an operator from a generator and write it as JSON."""
    from coarse_op.experiments import build_operator, stream_seed

    try:
        s = cio.space_from_json(cio.load_json_arg(space_spec))
        spec = {"type": op_type, "params": json.loads(params), "p": p, "k": k}
        b = build_operator(spec, s, stream_seed(seed, "operator", 0))
    except (ConfigError, ContractionError, MetricError, ValueError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(str(cio.write_json(out, cio.operator_to_json(b))))


@op.command("norm")
@common
@click.option("--op", "op_path", default=None, help="Operator JSON file.")
@click.option("--p-grid", default=None, help="Exponents to evaluate, e.g. '1 1.5 2 inf'.")
def op_norm(config, seed, out, jobs, op_path, p_grid):
    """Two-sided norm estimates."""
    data = _load_config(config, "norms")
    if op_path:
        data["operator"] = _operator_spec(op_path)
    if p_grid:
        data.setdefault("grids", {})["p"] = _exponents(p_grid)
    _execute(data, seed, out, jobs)


# -- partitions ------------------------------------------------------------------------------


@main.group()
def pou():
    """Partitions of unity."""


@pou.command("build")
@click.option("--space", "space_spec", required=True)
@click.option("--method", type=click.Choice(["disjoint", "bump", "folner"]), default="folner",
              show_default=True)
@click.option("--r", "radius", type=float, default=2.0, show_default=True, help="Cover radius.")
@click.option("--S", "box", type=int, default=4, show_default=True, help="Folner box side.")
@click.option("--width", type=float, default=1.0, show_default=True, help="Bump width.")
@click.option("--p", default="2", show_default=True)
@click.option("--var-grid", default="0 1 2 4", show_default=True)
@click.option("--out", type=click.Path(), default=None)
def pou_build(space_spec, method, radius, box, width, p, var_grid, out):
    """Build a partition of unity and report its variation."""
    from coarse_op import pou as P

    try:
        s = cio.space_from_json(cio.load_json_arg(space_spec))
        if method == "folner":
            part = P.grid_folner_pou(s, box, p)
        elif method == "disjoint":
            cover = P.disjoint_cover(s, radius)
            part = P.indicator_pou(s, cover.sets, p)
        else:
            part = P.pou_from_cover(P.disjoint_cover(s, radius), p, width=width)
        part.check()
    except (MetricError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    out_dir = Path(out or _default_out())
    rows = [{"r": r, "variation": P.variation(part, r)} for r in sorted(_floats(var_grid))]
    click.echo(str(cio.write_json(out_dir / "partition.json", cio.partition_to_json(part))))
    click.echo(str(cio.write_csv(out_dir / "variation.csv", rows)))


# -- experiments ---------------------------------------------------------------------------------


@main.group()
def approx():
    """Finite-propagation approximants."""


@approx.command("band")
@common
@click.option("--op", "op_path", default=None)
@click.option("--method", type=click.Choice(["truncate", "end", "mid", "schedule"]), default=None)
@click.option("--eps", default=None, help="eps values, e.g. '1 0.1 0.01'.")
@click.option("--ladder", default=None, help="Radius / box-side ladder for end and mid.")
def approx_band(config, seed, out, jobs, op_path, method, eps, ladder):
    """Approximation curves, or the scheduled approximant."""
    data = _load_config(config, "approx")
    if op_path:
        data["operator"] = _operator_spec(op_path)
    if method:
        data.setdefault("params", {})["method"] = method
    if eps:
        data.setdefault("grids", {})["eps"] = _floats(eps)
    if ladder:
        data.setdefault("grids", {})["S"] = _floats(ladder)
    _execute(data, seed, out, jobs)


@approx.command("decompose")
@click.option("--op", "op_path", required=True)
@click.option("--out", type=click.Path(), required=True)
def approx_decompose(op_path, out):
    """Export the band decomposition of an operator."""
    from coarse_op.approx import band_decompose

    b = cio.operator_from_json(json.loads(Path(op_path).read_text()))
    dec = band_decompose(b)
    if np.abs((dec.rebuild().matrix - b.matrix).toarray()).max(initial=0.0) > 1e-12:
        click.echo("invariant violated: decomposition does not rebuild the operator", err=True)
        sys.exit(1)
    click.echo(str(cio.write_json(out, dec.to_json())))


def _with_operator(config, kind, op_path) -> dict:
    data = _load_config(config, kind)
    if op_path:
        data["operator"] = _operator_spec(op_path)
    return data


@main.command("onl")
@common
@click.option("--op", "op_path", default=None)
@click.option("--S", "S", default=None, help="Window diameters.")
def onl(config, seed, out, jobs, op_path, S):
    """Best localised vector over ball windows."""
    data = _with_operator(config, "onl", op_path)
    if S:
        data.setdefault("grids", {})["S"] = _floats(S)
    _execute(data, seed, out, jobs)


@main.command("qlocalise")
@common
@click.option("--op", "op_path", default=None)
@click.option("--L", "L", default=None, help="Lipschitz constants, or 'auto' for the certificate inversion.")
@click.option("--eps", default=None)
def qlocalise(config, seed, out, jobs, op_path, L, eps):
    """Localise the norm witness onto one sparsification component."""
    data = _with_operator(config, "qlocalise", op_path)
    grids = data.setdefault("grids", {})
    if L:
        grids["L"] = ["auto" if t == "auto" else float(t) for t in L.replace(",", " ").split()]
    if eps:
        grids["eps"] = _floats(eps)
    _execute(data, seed, out, jobs)


@main.command("inverse")
@common
@click.option("--op", "op_path", default=None)
@click.option("--delta", default=None)
@click.option("--eps-grid", default=None)
def inverse(config, seed, out, jobs, op_path, delta, eps_grid):
    """Quasi-locality profile and approximation curve of (Id - delta a)^-1."""
    data = _with_operator(config, "inverse", op_path)
    grids = data.setdefault("grids", {})
    if delta:
        grids["delta"] = _floats(delta)
    if eps_grid:
        grids["eps"] = _floats(eps_grid)
    _execute(data, seed, out, jobs)


@main.command("sparsify")
@common
@click.option("--space", "space_spec", default=None)
@click.option("--weights", default=None, help="uniform, random, single-atom, or a JSON file.")
@click.option("--m", "m", default=None)
@click.option("--c", "c", default=None)
def sparsify_cmd(config, seed, out, jobs, space_spec, weights, m, c):
    """Metric sparsification of a mass distribution."""
    data = _load_config(config, "sparsify")
    if space_spec:
        data["space"] = cio.load_json_arg(space_spec)
    grids = data.setdefault("grids", {})
    if weights:
        grids["weights"] = weights.replace(",", " ").split()
    if m:
        grids["m"] = [int(float(t)) for t in _floats(m)]
    if c:
        grids["c"] = _floats(c)
    _execute(data, seed, out, jobs)


@main.command("sweep")
@common
@click.option("--space", "space_spec", default=None)
@click.option("--r-grid", default=None)
@click.option("--S-grid", "S_grid", default=None)
def sweep(config, seed, out, jobs, space_spec, r_grid, S_grid):
    """Run any config; without one, the Property A sweep on --space."""
    data = _load_config(config, "property-a-sweep")
    if space_spec:
        data["space"] = cio.load_json_arg(space_spec)
    grids = data.setdefault("grids", {})
    if r_grid:
        grids["r"] = _floats(r_grid)
    if S_grid:
        grids["S"] = _floats(S_grid)
    _execute(data, seed, out, jobs)


@main.command("validate")
@click.option("--config", type=click.Path(exists=True), required=True)
def validate_cmd(config):
    """Check a config without running it; prints one diagnostic per line."""
    try:
        data = json.loads(Path(config).read_text())
    except json.JSONDecodeError as exc:
        click.echo(f"config: not valid JSON ({exc})")
        sys.exit(2)
    diags = validate(data)
    for d in diags:
        click.echo(d)
    sys.exit(2 if diags else 0)


if __name__ == "__main__":
    main()
