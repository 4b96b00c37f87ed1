"""Batch front end: experiment configs in, CSV/JSON reports out.

Every experiment is a JSON object with a ``name``, a ``kind`` naming one of
the subcommands, an explicit ``seed`` (absent seed is a validation error, not
a default), and the kind's parameters.  A config file holds ``"schema": 1``
and a list of experiments; the same runners back the direct-flag subcommands,
so a flag invocation and its config twin produce byte-identical artifacts.

Exit codes: 0 when every assertion passed (a *recorded rejection* — e.g. a
layer refused a monotonicity certificate — is a valid outcome, not a
failure); 1 for config errors; 2 for assertion failures, accompanied by a
machine-readable ``failures.json`` in the output directory.
"""

from __future__ import annotations

import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import acceptance as acceptance_mod
from .discretize import convergence_scan, functor_a_error
from .decompose import DecompositionError, decompose
from .galerkin import (
    ConvexNonlinearity,
    FemMesh,
    fem_convergence,
    singularity_scan,
    solve_semilinear_trace,
)
from .invert import InversionError, invert_chain
from .isotopy import truncated_det_scan
from .monotone import pairwise_alpha
from .spectral import Subspace
from .serialize import (
    SCHEMA_VERSION,
    SpecError,
    blob_hash,
    chain_from_spec,
    check_keys,
    head_from_spec,
    layer_from_spec,
    load_json,
    read_envelope,
    space_from_config,
    write_csv,
    write_json,
)

SOURCES = {
    "zero": lambda t: -np.pi**2 * np.sin(np.pi * t),
    "linear": lambda t: -(np.pi**2 + 1.0) * np.sin(np.pi * t),
    "cubic": lambda t: -np.pi**2 * np.sin(np.pi * t) - np.sin(np.pi * t) ** 3,
}


class ConfigError(Exception):
    """Bad experiment config; maps to exit code 1."""


class CheckFailure(Exception):
    """A stated expectation did not hold; maps to exit code 2."""


# ---------------------------------------------------------------------------
# experiment runners (shared by subcommands and batch mode)


def _space_of(exp: dict):
    if "space" not in exp:
        raise ConfigError(f"experiment {exp.get('name', '?')!r} needs a 'space'")
    return space_from_config(exp["space"])


def _check_dims(exp: dict, dims, ambient: int) -> list[int]:
    """Prefix dimensions must be a strictly ascending chain inside 1..ambient."""
    try:
        out = [int(d) for d in dims]
    except (TypeError, ValueError) as err:
        raise ConfigError(f"experiment {exp['name']!r}: dims must be integers") from err
    if not out:
        raise ConfigError(f"experiment {exp['name']!r}: dims must be nonempty")
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"experiment {exp['name']!r}: dims must be strictly ascending")
    if out[0] < 1 or out[-1] > ambient:
        raise ConfigError(
            f"experiment {exp['name']!r}: dims must lie in 1..{ambient}"
        )
    return out


def run_monotone_check(exp: dict, out_dir: Path) -> dict:
    check_keys(
        exp,
        "monotone-check",
        {"name", "kind", "seed", "space", "layer"},
        {"dims", "radius", "samples", "floor", "out"},
    )
    space = _space_of(exp)
    layer = layer_from_spec(exp["layer"], space)
    seed = int(exp["seed"])
    radius = float(exp.get("radius", 1.0))
    samples = int(exp.get("samples", 128))
    dims = _check_dims(exp, exp.get("dims", _prefix_dims(space.dim, 8)), space.dim)
    report = {
        "schema": SCHEMA_VERSION,
        "name": exp["name"],
        "kind": "monotone-check",
        "seed": seed,
        "contraction": float(layer.contraction),
    }
    if not layer.contraction < 1.0:
        report["rejected"] = True
        report["reason"] = (
            "the layer's contraction bound is not below one, so it carries no "
            "monotonicity certificate"
        )
    else:
        floor = float(exp.get("floor", 1.0 - layer.contraction))
        rows = []
        worst = math.inf
        for d in dims:
            cert = pairwise_alpha(
                layer.eval_array,
                r=radius,
                n=samples,
                seed=seed,
                dim=space.dim,
                subspace=Subspace.prefix(int(d)),
            )
            worst = min(worst, cert.alpha)
            rows.append(
                {
                    "dim": int(d),
                    "alpha_hat": cert.alpha,
                    "certificate": cert.as_dict(),
                    "certificate_hash": blob_hash(cert.as_dict()),
                }
            )
        report.update(
            {
                "rejected": False,
                "floor": floor,
                "scan": rows,
                "alpha_min": worst,
                "pass": bool(worst >= floor - 1e-6),
            }
        )
        if not report["pass"]:
            write_json(out_dir / f"{exp['name']}.json", report)
            raise CheckFailure(
                f"sampled alpha {worst:.6g} fell below the certified floor {floor:.6g}"
            )
    write_json(out_dir / f"{exp['name']}.json", report)
    return report


def run_discretize_scan(exp: dict, out_dir: Path) -> dict:
    check_keys(
        exp,
        "discretize-scan",
        {"name", "kind", "seed", "space", "layer", "dims"},
        {"radius", "samples", "out"},
    )
    space = _space_of(exp)
    layer = layer_from_spec(exp["layer"], space)
    report = convergence_scan(
        layer.eval_array,
        _check_dims(exp, exp["dims"], space.dim),
        r=float(exp.get("radius", 1.0)),
        n=int(exp.get("samples", 256)),
        seed=int(exp["seed"]),
        dim=space.dim,
        description=exp["name"],
    )
    stem = out_dir / exp["name"]
    stem.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{stem}.csv").write_text(report.to_csv_text())
    write_json(f"{stem}.meta.json", {"schema": SCHEMA_VERSION, **report.as_dict()["metadata"]})
    return report.as_dict()


def run_decompose(exp: dict, out_dir: Path) -> dict:
    check_keys(
        exp,
        "decompose",
        {"name", "kind", "seed", "space", "layer", "epsilon", "radius"},
        {"composite_tol", "n_verify", "out"},
    )
    space = _space_of(exp)
    layer = layer_from_spec(exp["layer"], space)
    epsilon = float(exp["epsilon"])
    radius = float(exp["radius"])
    if not (epsilon > 0.0 and radius > 0.0):
        raise ConfigError(
            f"experiment {exp['name']!r}: epsilon and radius must be positive"
        )
    result = decompose(
        layer,
        epsilon,
        radius,
        composite_tol=float(exp.get("composite_tol", 1e-6)),
        seed=int(exp["seed"]),
        n_verify=int(exp.get("n_verify", 200)),
    )
    report = {
        "schema": SCHEMA_VERSION,
        "name": exp["name"],
        "kind": "decompose",
        "seed": int(exp["seed"]),
        "j": result.j,
        "epsilon": result.epsilon,
        "r1": result.r1,
        "diagnostics": result.diagnostics,
        "replay": {
            "space": exp["space"],
            "layer": exp["layer"],
            "epsilon": float(exp["epsilon"]),
            "radius": float(exp["radius"]),
            "composite_tol": float(exp.get("composite_tol", 1e-6)),
            "seed": int(exp["seed"]),
            "note": "decompose is deterministic: rerunning this spec rebuilds "
            "the identical block sequence",
        },
    }
    out = exp.get("out", f"{exp['name']}.json")
    write_json(out_dir / out, report)
    return report


def run_invert(exp: dict, out_dir: Path) -> dict:
    check_keys(
        exp,
        "invert",
        {"name", "kind", "seed", "chain", "y"},
        {"head", "tol", "max_iter", "out"},
    )
    chain = chain_from_spec(exp["chain"])
    head = head_from_spec(exp.get("head", {"kind": "identity"}), dim=chain.dim)
    try:
        y = np.asarray(exp["y"], dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"experiment {exp['name']!r}: y must be a number array") from err
    if y.shape != (chain.dim,) or not np.all(np.isfinite(y)):
        raise ConfigError(
            f"experiment {exp['name']!r}: y must be {chain.dim} finite numbers"
        )
    result = invert_chain(
        chain,
        head,
        y,
        tol=float(exp.get("tol", 1e-10)),
        max_iter=int(exp.get("max_iter", 10_000)),
    )
    report = {
        "schema": SCHEMA_VERSION,
        "name": exp["name"],
        "kind": "invert",
        "seed": int(exp["seed"]),
        "x": result.x.tolist(),
        "trace": result.trace.as_dict(),
        "roundtrip_target": result.roundtrip_target,
    }
    write_json(out_dir / exp.get("out", f"{exp['name']}.json"), report)
    return report


def run_nogo_galerkin(exp: dict, out_dir: Path) -> dict:
    check_keys(
        exp,
        "nogo-galerkin",
        {"name", "kind", "seed", "path_kind", "n"},
        {"grid", "bisect_tol", "out"},
    )
    if exp["path_kind"] not in ("a", "b"):
        raise ConfigError(f"experiment {exp['name']!r}: path_kind must be 'a' or 'b'")
    n = int(exp["n"])
    if n < 1 or n % 2 == 0:
        raise ConfigError(f"experiment {exp['name']!r}: n must be an odd positive count")
    scan = singularity_scan(
        exp["path_kind"],
        n,
        int(exp.get("grid", 101)),
        float(exp.get("bisect_tol", 1e-12)),
    )
    stem = out_dir / exp.get("out", exp["name"])
    write_csv(f"{stem}.csv", "s,det,min_sv", scan.rows())
    write_json(f"{stem}.json", {"schema": SCHEMA_VERSION, "name": exp["name"], **scan.as_dict()})
    return scan.as_dict()


def run_nogo_isotopy(exp: dict, out_dir: Path) -> dict:
    check_keys(
        exp, "nogo-isotopy", {"name", "kind", "seed", "m"}, {"grid", "bisect_tol", "out"}
    )
    m = int(exp["m"])
    if m < 3 or m % 2 == 0:
        raise ConfigError(f"experiment {exp['name']!r}: m must be odd and at least 3")
    scan = truncated_det_scan(
        m,
        int(exp.get("grid", 101)),
        float(exp.get("bisect_tol", 1e-12)),
    )
    stem = out_dir / exp.get("out", exp["name"])
    write_csv(f"{stem}.csv", "t,det,min_sv", scan.rows())
    write_json(f"{stem}.json", {"schema": SCHEMA_VERSION, "name": exp["name"], **scan.as_dict()})
    return scan.as_dict()


def run_fem_solve(exp: dict, out_dir: Path) -> dict:
    check_keys(
        exp, "fem-solve", {"name", "kind", "seed", "g", "mesh"}, {"tol", "out"}
    )
    g_name = exp["g"]
    if g_name not in SOURCES:
        raise ConfigError(f"unknown reaction {g_name!r}; know {sorted(SOURCES)}")
    reaction = ConvexNonlinearity.named(g_name)
    source = SOURCES[g_name]
    sizes = [int(c) for c in exp["mesh"]]
    if len(sizes) < 2 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError(
            f"experiment {exp['name']!r}: mesh needs at least two strictly "
            "increasing cell counts"
        )
    if any(sizes[0] < 1 or (8 * sizes[-1]) % s != 0 for s in sizes):
        raise ConfigError(
            f"experiment {exp['name']!r}: every mesh size must divide the "
            f"reference mesh of {8 * sizes[-1]} cells"
        )
    tol = float(exp.get("tol", 1e-10))
    conv = fem_convergence(source, reaction, sizes, tol=tol)
    _, trace = solve_semilinear_trace(source, FemMesh(sizes[-1]), reaction, tol=tol)
    stem = out_dir / exp.get("out", exp["name"])
    rows = [
        (sizes[i], conv.errors[i], conv.ratios[i] if i < len(conv.ratios) else math.nan)
        for i in range(len(sizes))
    ]
    write_csv(f"{stem}.csv", "cells,h1_error,ratio", rows)
    write_json(
        f"{stem}.json",
        {
            "schema": SCHEMA_VERSION,
            "name": exp["name"],
            "source": "manufactured: solution sin(pi t) for the chosen reaction",
            **conv.as_dict(),
            "newton": trace.as_dict(),
        },
    )
    return conv.as_dict()


def quant_report(f, dims, r, n, seed, dim):
    """Measured prefix error next to the size bound's growth shape.

    Per prefix dim ``d`` inside the ambient dimension ``dim``: the sampled
    range-tail error eps_V of the prefix discretization, then
    ``log2((1 + r) / eps_V)`` (depth shape) and ``eps_V**-d * log2((1 + r) /
    eps_V)`` (nonzero-count shape), both with the dimensional constant left
    at 1.  Rows with eps_V = 0 report 0; overflowing bounds report inf.  No
    network is synthesized — the columns juxtapose a measurement with a
    formula's growth, nothing more.
    """
    rows = []
    for d in dims:
        eps = functor_a_error(
            f, Subspace.prefix(int(d)), r=r, n=n, seed=seed, dim=dim
        )
        if eps == 0.0:
            layers_bound = 0.0
            nonzeros = 0.0
        else:
            layers_bound = math.log2((1.0 + r) / eps)
            try:
                nonzeros = eps ** (-float(d)) * layers_bound
            except OverflowError:
                nonzeros = math.inf
        rows.append(
            {
                "dim": int(d),
                "epsilon_v": float(eps),
                "layers_bound": float(layers_bound),
                "nonzeros_bound": float(nonzeros),
            }
        )
    return rows


def run_quant_report(exp: dict, out_dir: Path) -> dict:
    check_keys(
        exp,
        "quant-report",
        {"name", "kind", "seed", "space", "layer", "dims"},
        {"radius", "samples", "out"},
    )
    space = _space_of(exp)
    layer = layer_from_spec(exp["layer"], space)
    r = float(exp.get("radius", 1.0))
    rows = quant_report(
        layer.eval_array,
        _check_dims(exp, exp["dims"], space.dim),
        r,
        int(exp.get("samples", 256)),
        int(exp["seed"]),
        dim=space.dim,
    )
    stem = out_dir / exp.get("out", exp["name"])
    header = (
        "# size-bound columns show growth shape only: the dimensional constant is 1 "
        "and no network is synthesized\n"
        "dim,epsilon_v,layers_bound,nonzeros_bound"
    )
    write_csv(
        f"{stem}.csv",
        header,
        [(row["dim"], row["epsilon_v"], row["layers_bound"], row["nonzeros_bound"]) for row in rows],
    )
    report = {"schema": SCHEMA_VERSION, "name": exp["name"], "radius": r, "rows": rows}
    write_json(f"{stem}.json", report)
    return report


RUNNERS = {
    "monotone-check": run_monotone_check,
    "discretize-scan": run_discretize_scan,
    "decompose": run_decompose,
    "invert": run_invert,
    "nogo-galerkin": run_nogo_galerkin,
    "nogo-isotopy": run_nogo_isotopy,
    "fem-solve": run_fem_solve,
    "quant-report": run_quant_report,
}


def _prefix_dims(ambient: int, count: int) -> list[int]:
    """Evenly spread prefix dimensions, always ending at the ambient dim."""
    if ambient <= count:
        return list(range(1, ambient + 1))
    dims = np.unique(np.linspace(1, ambient, count).astype(int))
    return [int(d) for d in dims]


def _validate_experiment(exp: dict, index: int, seed_override: int | None) -> dict:
    if not isinstance(exp, dict):
        raise ConfigError(f"experiment #{index}: expected an object")
    name = exp.get("name")
    if not name or not isinstance(name, str):
        raise ConfigError(f"experiment #{index}: needs a string 'name'")
    kind = exp.get("kind")
    if kind not in RUNNERS:
        raise ConfigError(
            f"experiment {name!r}: unknown kind {kind!r}; know {sorted(RUNNERS)}"
        )
    if seed_override is not None:
        exp = {**exp, "seed": int(seed_override)}
    if "seed" not in exp:
        raise ConfigError(f"experiment {name!r}: every experiment carries an explicit seed")
    return exp


def run_config(config: dict, out_dir: Path, jobs: int, seed_override: int | None) -> list[dict]:
    read_envelope(config, "config", {"experiments"})
    experiments = config["experiments"]
    if not isinstance(experiments, list):
        raise ConfigError("config: 'experiments' must be a list")
    validated = [
        _validate_experiment(exp, i, seed_override) for i, exp in enumerate(experiments)
    ]
    names = [e["name"] for e in validated]
    if len(set(names)) != len(names):
        raise ConfigError("config: experiment names must be unique (artifacts are per-name files)")

    def one(exp: dict) -> dict:
        try:
            RUNNERS[exp["kind"]](exp, out_dir)
            return {"name": exp["name"], "kind": exp["kind"], "status": "ok"}
        except (SpecError, ConfigError) as err:
            return {"name": exp["name"], "kind": exp["kind"], "status": "config-error", "error": str(err)}
        except (
            CheckFailure,
            AssertionError,
            InversionError,
            DecompositionError,
            RuntimeError,
            ValueError,
        ) as err:
            return {
                "name": exp["name"],
                "kind": exp["kind"],
                "status": "failed",
                "error": str(err),
                "error_type": type(err).__name__,
            }

    if jobs > 1 and len(validated) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, validated))
    else:
        outcomes = [one(exp) for exp in validated]
    return outcomes


# ---------------------------------------------------------------------------
# click wiring


def _finish(outcomes: list[dict], out_dir: Path) -> None:
    for o in outcomes:
        click.echo(f"{o['status']:>12}  {o['kind']}  {o['name']}")
    config_errors = [o for o in outcomes if o["status"] == "config-error"]
    failures = [o for o in outcomes if o["status"] == "failed"]
    if failures:
        write_json(out_dir / "failures.json", {"schema": SCHEMA_VERSION, "failed": failures})
    if config_errors:
        raise SystemExit(1)
    if failures:
        raise SystemExit(2)


def _run_single(exp: dict, out_dir: Path, seed_override: int | None) -> None:
    exp = _validate_experiment(exp, 0, seed_override)
    try:
        RUNNERS[exp["kind"]](exp, out_dir)
    except (SpecError, ConfigError) as err:
        raise click.ClickException(str(err)) from err
    except (
        CheckFailure,
        AssertionError,
        InversionError,
        DecompositionError,
        RuntimeError,
        ValueError,
    ) as err:
        write_json(
            out_dir / "failures.json",
            {
                "schema": SCHEMA_VERSION,
                "failed": [
                    {
                        "name": exp["name"],
                        "kind": exp["kind"],
                        "status": "failed",
                        "error": str(err),
                        "error_type": type(err).__name__,
                    }
                ],
            },
        )
        click.echo(f"failed: {err}", err=True)
        raise SystemExit(2) from err
    click.echo(f"          ok  {exp['kind']}  {exp['name']}")


def _merge_config(ctx, kind: str, flags: dict) -> dict:
    """Build one experiment dict from an optional config file plus flags."""
    exp: dict = {}
    config_path = ctx.obj.get("config")
    if config_path is not None:
        blob = load_json(config_path)
        if "experiments" in blob:
            raise click.ClickException(
                "a multi-experiment config runs without a subcommand: opdisc --config FILE"
            )
        exp = dict(blob)
        exp.pop("schema", None)
    exp.setdefault("kind", kind)
    if exp["kind"] != kind:
        raise click.ClickException(
            f"config is for kind {exp['kind']!r} but the subcommand is {kind!r}"
        )
    for key, value in flags.items():
        if value is not None:
            exp[key] = value
    exp.setdefault("name", kind)
    if config_path is None:
        # a pure flag invocation composes its own experiment; config files
        # must still carry their seed explicitly
        exp.setdefault("seed", 0)
    return exp


@click.group(invoke_without_command=True)
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON experiment config; without a subcommand, runs every experiment in it.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="artifacts",
              show_default=True, help="Directory for CSV/JSON artifacts.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Concurrent experiments in batch mode.")
@click.option("--seed", type=int, default=None, help="Override every experiment's seed.")
@click.pass_context
def main(ctx, config, out_dir, jobs, seed):
    """Numerical laboratory for discretizing operator layers: batch runner."""
    ctx.ensure_object(dict)
    ctx.obj.update(config=config, out=Path(out_dir), jobs=jobs, seed=seed)
    if ctx.invoked_subcommand is not None:
        return
    if config is None:
        click.echo(ctx.get_help())
        return
    try:
        blob = load_json(config)
        outcomes = run_config(blob, Path(out_dir), jobs, seed)
    except (SpecError, ConfigError) as err:
        raise click.ClickException(str(err)) from err
    _finish(outcomes, Path(out_dir))


@main.command("monotone-check")
@click.option("--layer", "layer_path", type=click.Path(exists=True, dir_okay=False),
              help="Layer file: {schema, space, layer}.")
@click.option("--dims", type=str, default=None, help="Comma-separated prefix dims.")
@click.option("--radius", type=float, default=None)
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--name", type=str, default=None)
@click.pass_context
def monotone_check_cmd(ctx, layer_path, dims, radius, samples, seed, name):
    """Sampled strong-monotonicity certificates on a ladder of prefixes."""
    flags = {
        "radius": radius,
        "samples": samples,
        "seed": seed if seed is not None else ctx.obj.get("seed"),
        "name": name,
    }
    if dims is not None:
        flags["dims"] = [int(d) for d in dims.split(",")]
    if layer_path is not None:
        blob = read_envelope(load_json(layer_path), "layer file", {"space", "layer"})
        flags["space"] = blob["space"]
        flags["layer"] = blob["layer"]
    exp = _merge_config(ctx, "monotone-check", flags)
    _run_single(exp, ctx.obj["out"], None)


@main.command("discretize-scan")
@click.option("--layer", "layer_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--dims", type=str, default=None, help="Comma-separated prefix dims.")
@click.option("--radius", type=float, default=None)
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--name", type=str, default=None)
@click.pass_context
def discretize_scan_cmd(ctx, layer_path, dims, radius, samples, seed, name):
    """Prefix-discretization error scan; CSV plus a JSON metadata sidecar."""
    flags = {
        "radius": radius,
        "samples": samples,
        "seed": seed if seed is not None else ctx.obj.get("seed"),
        "name": name,
    }
    if dims is not None:
        flags["dims"] = [int(d) for d in dims.split(",")]
    if layer_path is not None:
        blob = read_envelope(load_json(layer_path), "layer file", {"space", "layer"})
        flags["space"] = blob["space"]
        flags["layer"] = blob["layer"]
    exp = _merge_config(ctx, "discretize-scan", flags)
    _run_single(exp, ctx.obj["out"], None)


@main.command("decompose")
@click.option("--layer", "layer_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--epsilon", type=float, default=None)
@click.option("--radius", type=float, default=None)
@click.option("--out", "out_file", type=str, default=None, help="Result JSON filename.")
@click.option("--seed", type=int, default=None)
@click.option("--name", type=str, default=None)
@click.pass_context
def decompose_cmd(ctx, layer_path, epsilon, radius, out_file, seed, name):
    """Split a bilipschitz layer into near-identity blocks; JSON result."""
    flags = {
        "epsilon": epsilon,
        "radius": radius,
        "out": out_file,
        "seed": seed if seed is not None else ctx.obj.get("seed"),
        "name": name,
    }
    if layer_path is not None:
        blob = read_envelope(load_json(layer_path), "layer file", {"space", "layer"})
        flags["space"] = blob["space"]
        flags["layer"] = blob["layer"]
    exp = _merge_config(ctx, "decompose", flags)
    _run_single(exp, ctx.obj["out"], None)


@main.command("invert")
@click.option("--chain", "chain_path", type=click.Path(exists=True, dir_okay=False),
              help="Chain file: {schema, chain, head?}.")
@click.option("--y", "y_path", type=click.Path(exists=True, dir_okay=False),
              help="Target file: {schema, y} or a bare JSON array.")
@click.option("--tol", type=float, default=None)
@click.option("--max-iter", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--name", type=str, default=None)
@click.pass_context
def invert_cmd(ctx, chain_path, y_path, tol, max_iter, seed, name):
    """Invert a certified residual chain by fixed-point iteration."""
    flags = {
        "tol": tol,
        "max_iter": max_iter,
        "seed": seed if seed is not None else ctx.obj.get("seed"),
        "name": name,
    }
    if chain_path is not None:
        blob = read_envelope(load_json(chain_path), "chain file", {"chain"}, {"head"})
        flags["chain"] = blob["chain"]
        if "head" in blob:
            flags["head"] = blob["head"]
    if y_path is not None:
        y_blob = load_json(y_path)
        if isinstance(y_blob, dict):
            y_blob = read_envelope(y_blob, "y file", {"y"})["y"]
        flags["y"] = y_blob
    exp = _merge_config(ctx, "invert", flags)
    _run_single(exp, ctx.obj["out"], None)


@main.command("nogo-galerkin")
@click.option("--kind", "path_kind", type=click.Choice(["a", "b"]), default=None)
@click.option("--n", type=int, default=None, help="Basis functions (odd).")
@click.option("--grid", type=int, default=None)
@click.option("--bisect-tol", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--name", type=str, default=None)
@click.pass_context
def nogo_galerkin_cmd(ctx, path_kind, n, grid, bisect_tol, seed, name):
    """Determinant sign change along a singular Galerkin path; CSV s,det,min_sv."""
    flags = {
        "path_kind": path_kind,
        "n": n,
        "grid": grid,
        "bisect_tol": bisect_tol,
        "seed": seed if seed is not None else ctx.obj.get("seed"),
        "name": name,
    }
    exp = _merge_config(ctx, "nogo-galerkin", flags)
    _run_single(exp, ctx.obj["out"], None)


@main.command("nogo-isotopy")
@click.option("--m", type=int, default=None, help="Truncation dimension (odd).")
@click.option("--grid", type=int, default=None)
@click.option("--bisect-tol", type=float, default=None)
@click.option("--out", "out_file", type=str, default=None, help="Artifact stem.")
@click.option("--seed", type=int, default=None)
@click.option("--name", type=str, default=None)
@click.pass_context
def nogo_isotopy_cmd(ctx, m, grid, bisect_tol, out_file, seed, name):
    """Determinant crossing of the truncated rotation-cascade path; CSV t,det,min_sv."""
    flags = {
        "m": m,
        "grid": grid,
        "bisect_tol": bisect_tol,
        "out": out_file,
        "seed": seed if seed is not None else ctx.obj.get("seed"),
        "name": name,
    }
    exp = _merge_config(ctx, "nogo-isotopy", flags)
    _run_single(exp, ctx.obj["out"], None)


@main.command("fem-solve")
@click.option("--g", type=click.Choice(sorted(SOURCES)), default=None,
              help="Reaction term; the source is manufactured for sin(pi t).")
@click.option("--mesh", type=str, default=None, help="Comma-separated cell counts.")
@click.option("--seed", type=int, default=None)
@click.option("--name", type=str, default=None)
@click.pass_context
def fem_solve_cmd(ctx, g, mesh, seed, name):
    """Hat-element semilinear solves with an error-ratio table."""
    flags = {
        "g": g,
        "seed": seed if seed is not None else ctx.obj.get("seed"),
        "name": name,
    }
    if mesh is not None:
        flags["mesh"] = [int(c) for c in mesh.split(",")]
    exp = _merge_config(ctx, "fem-solve", flags)
    _run_single(exp, ctx.obj["out"], None)


@main.command("quant-report")
@click.option("--layer", "layer_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--dims", type=str, default=None)
@click.option("--radius", type=float, default=None)
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--name", type=str, default=None)
@click.pass_context
def quant_report_cmd(ctx, layer_path, dims, radius, samples, seed, name):
    """Measured prefix errors next to the size bound's growth shape."""
    flags = {
        "radius": radius,
        "samples": samples,
        "seed": seed if seed is not None else ctx.obj.get("seed"),
        "name": name,
    }
    if dims is not None:
        flags["dims"] = [int(d) for d in dims.split(",")]
    if layer_path is not None:
        blob = read_envelope(load_json(layer_path), "layer file", {"space", "layer"})
        flags["space"] = blob["space"]
        flags["layer"] = blob["layer"]
    exp = _merge_config(ctx, "quant-report", flags)
    _run_single(exp, ctx.obj["out"], None)


@main.command("accept")
@click.option("--only", type=str, default=None,
              help="Comma-separated criterion numbers to run (default: all ten).")
@click.pass_context
def accept_cmd(ctx, only):
    """Run the full acceptance suite; one pass/fail line per criterion."""
    numbers = None
    if only is not None:
        try:
            numbers = sorted({int(tok) for tok in only.split(",")})
        except ValueError as err:
            raise click.ClickException(f"--only wants criterion numbers: {err}") from err
    out_dir = ctx.obj["out"]
    results = acceptance_mod.run_suite(numbers)
    for res in results:
        status = "PASS" if res["passed"] else "FAIL"
        click.echo(f"{status}  criterion {res['criterion']:>2}  {res['name']}  [{res['elapsed']:.1f}s]")
    write_json(out_dir / "acceptance.json", {"schema": SCHEMA_VERSION, "results": results})
    if not all(r["passed"] for r in results):
        failed = [r for r in results if not r["passed"]]
        write_json(out_dir / "failures.json", {"schema": SCHEMA_VERSION, "failed": failed})
        raise SystemExit(2)


if __name__ == "__main__":
    main()
