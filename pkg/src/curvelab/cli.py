"""Batch front-end: config loading, one subcommand per experiment, plot-ready
output emission.

Every run writes a RunManifest (manifest.json) into its output directory
before doing any work; an existing manifest makes a rerun refuse to
overwrite unless --force is given.  Exit codes: 0 success, 2 configuration
error, 3 numeric failure in the solver.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from dataclasses import replace
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__
from .arrival import truncated_arrival
from .concentration import mc_verify_alt, reflected_walk, indicator_maximal_check, conditional_hoeffding_check
from .field import FieldSpec
from .grid import Grid2D, GridSet
from .homog import ball_experiment, estimate_vhom, hole_experiment
from .io import float_repr, write_gmh1, write_mask, write_records_csv
from .levelset import NumericError, SolverParams, evolve
from .mcharness import (
    EnsembleConfig,
    FLUCT_COLUMNS,
    box_criterion,
    fluct_report,
    resolve_workers,
    run_ensemble,
)

CONFIG_ERROR = 2
NUMERIC_ERROR = 3

# every key a config file may set; unknown keys are hard errors
KNOWN_KEYS = {
    "field.a", "field.f_uni", "field.delta_f",
    "obstacle.intensity", "obstacle.profile", "obstacle.peak",
    "rng.seed",
    "solver.cfl", "solver.band", "solver.reinit_every", "solver.reinit_mode",
    "solver.record_dt",
    "run.v_min", "run.c_s", "run.workers",
    "evolve.initial", "evolve.center_x", "evolve.center_y", "evolve.radius",
    "evolve.horizon", "evolve.grid_half", "evolve.dx",
    "arrival.x0_x", "arrival.x0_y", "arrival.h", "arrival.dist",
    "arrival.n_seeds",
    "vhom.scales", "vhom.theta", "vhom.beta", "vhom.n_seeds", "vhom.delta_f",
    "vhom.lateral_frac",
    "fluct.dists", "fluct.h_exponent", "fluct.n_seeds",
    "ball.R_eps", "ball.theta", "ball.eta", "ball.beta", "ball.n_seeds",
    "hole.R_eps", "hole.theta", "hole.eta", "hole.beta", "hole.n_seeds",
    "box.r", "box.w", "box.n_seeds", "box.t_max", "box.dx", "box.stab_horizon",
}


class ConfigError(ValueError):
    pass


def flatten_config(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for key, val in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(val, dict):
            flat.update(flatten_config(val, f"{dotted}."))
        else:
            flat[dotted] = val
    return flat


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    raw = Path(path).read_bytes()
    flat = flatten_config(tomllib.loads(raw.decode()))
    unknown = sorted(set(flat) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return flat


def solver_params_from(cfg: dict) -> dict:
    out = {}
    for name in ("cfl", "band", "reinit_every", "reinit_mode", "record_dt"):
        key = f"solver.{name}"
        if key in cfg:
            out[name] = cfg[key]
    return out


# ---------------------------------------------------------------------------
# manifests


def start_manifest(out_dir: Path, command: str, cfg: dict, seed: int, force: bool) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    if path.exists() and not force:
        raise ConfigError(f"{path} exists; rerun with --force to overwrite")
    manifest = {
        "schema": 1,
        "artifact_version": __version__,
        "command": command,
        "config": cfg,
        "master_seed": seed,
        "started": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": [],
        "complete": False,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def finish_manifest(path: Path, outputs: list[str]) -> None:
    manifest = json.loads(path.read_text())
    manifest["outputs"] = sorted(outputs)
    manifest["finished"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    manifest["complete"] = True
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


def write_dat(path: Path, pairs) -> None:
    """Two-column whitespace table for plotting."""
    lines = [f"{float_repr(a)} {float_repr(b)}" for a, b in pairs]
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_field(args, cfg):
    spec = FieldSpec.from_config(cfg)
    out = Path(args.out)
    manifest = start_manifest(out, "gen-field", cfg, args.seed, args.force)
    half = cfg.get("evolve.grid_half", 32.0)
    field = spec.realize((-half, half, -half, half), args.seed)
    outputs = []
    pts_path = out / "points.csv"
    if field.points is not None:
        rows = [{"x": p[0], "y": p[1]} for p in field.points.points]
    else:
        rows = []
    write_records_csv(pts_path, rows, ["x", "y"])
    outputs.append(str(pts_path))
    dx = cfg.get("evolve.dx", 0.25)
    n = int(2 * half / dx) + 1
    grid = Grid2D(n, n, dx, (-half, -half))
    f_path = out / "forcing.gmh1"
    write_gmh1(f_path, grid, field.forcing_grid(grid), 0.0)
    outputs.append(str(f_path))
    finish_manifest(manifest, outputs)
    return 0


def _initial_set(cfg, grid):
    kind = cfg.get("evolve.initial", "disk")
    cx = cfg.get("evolve.center_x", 0.0)
    cy = cfg.get("evolve.center_y", 0.0)
    radius = cfg.get("evolve.radius", 5.0)
    if kind == "disk":
        return GridSet.disk(grid, (cx, cy), radius)
    if kind == "halfplane":
        return GridSet.halfplane(grid, (0.0, 1.0), cy)
    raise ConfigError(f"unknown initial set {kind!r}")


def cmd_evolve(args, cfg):
    spec = FieldSpec.from_config(cfg)
    out = Path(args.out)
    manifest = start_manifest(out, "evolve", cfg, args.seed, args.force)
    half = cfg.get("evolve.grid_half", 24.0)
    dx = cfg.get("evolve.dx", 0.25)
    n = int(2 * half / dx) + 1
    grid = Grid2D(n, n, dx, (-half, -half))
    field = spec.realize((-half, half, -half, half), args.seed)
    params = SolverParams(**solver_params_from(cfg))
    horizon = cfg.get("evolve.horizon", 5.0)
    S = _initial_set(cfg, grid)
    outputs = []
    k = 0

    from .levelset import init_from_set, Workspace, step as ls_step

    traj = evolve(S, field, horizon, params)
    for t, snap in traj:
        mask_path = out / f"mask_{k:05d}.pbm"
        write_mask(mask_path, snap, t)
        outputs.append(str(mask_path))
        k += 1
    state = evolve(S, field, horizon, params, keep_masks=False)
    u_path = out / "final_u.gmh1"
    write_gmh1(u_path, grid, state.u, state.t)
    outputs.append(str(u_path))
    finish_manifest(manifest, outputs)
    return 0


def cmd_arrival(args, cfg):
    spec = FieldSpec.from_config(cfg)
    out = Path(args.out)
    manifest = start_manifest(out, "arrival", cfg, args.seed, args.force)
    dist = cfg.get("arrival.dist", 20.0)
    h = cfg.get("arrival.h", max(2.0, dist**0.5))
    n_seeds = int(cfg.get("arrival.n_seeds", args.seeds or 8))
    config = EnsembleConfig(
        kind="fluct",
        field=spec,
        master_seed=args.seed,
        n_seeds=n_seeds,
        workers=resolve_workers(args.workers),
        scales=(dist,),
        h_exponent=np.log(h) / np.log(dist) if dist > 1 else 0.5,
        v_min=cfg.get("run.v_min"),
        c_s=cfg.get("run.c_s", 2.0),
        solver=solver_params_from(cfg) or None,
    )
    csv_path = out / "records.csv"
    records, stats = run_ensemble(config, csv_path)
    summary = out / "summary.json"
    summary.write_text(json.dumps(stats.to_json(), indent=2, sort_keys=True))
    finish_manifest(manifest, [str(csv_path), str(summary)])
    return 0


def cmd_vhom(args, cfg):
    spec = FieldSpec.from_config(cfg)
    out = Path(args.out)
    manifest = start_manifest(out, "vhom", cfg, args.seed, args.force)
    scales = args.scales or cfg.get("vhom.scales", [50.0, 100.0, 200.0])
    if isinstance(scales, str):
        scales = [float(s) for s in scales.split(",")]
    est, records = estimate_vhom(
        spec,
        r_list=scales,
        theta=cfg.get("vhom.theta", 0.5),
        beta=cfg.get("vhom.beta", 2.0),
        n_seeds=int(args.seeds or cfg.get("vhom.n_seeds", 20)),
        delta_f=cfg.get("vhom.delta_f", 0.0),
        master_seed=args.seed,
        v_min=cfg.get("run.v_min"),
        c_s=cfg.get("run.c_s", 2.0),
        workers=resolve_workers(args.workers),
        lateral_frac=cfg.get("vhom.lateral_frac", 0.35),
        solver=solver_params_from(cfg) or None,
    )
    outputs = []
    vhat_csv = out / "vhat.csv"
    rows = [
        {
            "scale": r, "mean": m, "std": s, "v_hat": v, "v_hat_corrected": vc,
            "censored_frac": cf, "flagged": fl, "n": est.n_seeds,
        }
        for r, m, s, v, vc, cf, fl in zip(
            est.r_list, est.means, est.stds, est.v_hat,
            est.v_hat_corrected, est.censored_frac, est.flagged,
        )
    ]
    write_records_csv(vhat_csv, rows,
                      ["scale", "mean", "std", "v_hat", "v_hat_corrected",
                       "censored_frac", "flagged", "n"])
    outputs.append(str(vhat_csv))
    rec_csv = out / "records.csv"
    write_records_csv(rec_csv, sorted(records, key=lambda r: (r["r"], r["seed"])),
                      ["r", "seed", "dist", "h", "value", "censored", "cap"])
    outputs.append(str(rec_csv))
    dat = out / "vhat.dat"
    write_dat(dat, [(r, v) for r, v in zip(est.r_list, est.v_hat)])
    outputs.append(str(dat))
    summary = out / "summary.json"
    summary.write_text(json.dumps(est.to_json(), indent=2, sort_keys=True))
    outputs.append(str(summary))
    finish_manifest(manifest, outputs)
    return 0


def cmd_fluct(args, cfg):
    spec = FieldSpec.from_config(cfg)
    out = Path(args.out)
    manifest = start_manifest(out, "fluct", cfg, args.seed, args.force)
    dists = cfg.get("fluct.dists", [50.0, 100.0, 200.0, 400.0])
    config = EnsembleConfig(
        kind="fluct",
        field=spec,
        master_seed=args.seed,
        n_seeds=int(args.seeds or cfg.get("fluct.n_seeds", 200)),
        workers=resolve_workers(args.workers),
        scales=tuple(float(d) for d in dists),
        h_exponent=cfg.get("fluct.h_exponent", 0.5),
        v_min=cfg.get("run.v_min"),
        c_s=cfg.get("run.c_s", 2.0),
        solver=solver_params_from(cfg) or None,
    )
    csv_path = out / "records.csv"
    records, stats = run_ensemble(config, csv_path)
    outputs = [str(csv_path)]
    summary = out / "summary.json"
    summary.write_text(json.dumps(stats.to_json(), indent=2, sort_keys=True))
    outputs.append(str(summary))
    dat = out / "std_vs_dist.dat"
    write_dat(dat, [(s.scale, s.std) for s in stats.scales])
    outputs.append(str(dat))
    finish_manifest(manifest, outputs)
    return 0


def _schedule_cmd(args, cfg, kind):
    spec = FieldSpec.from_config(cfg)
    out = Path(args.out)
    manifest = start_manifest(out, kind, cfg, args.seed, args.force)
    runner = ball_experiment if kind == "ball" else hole_experiment
    sched, steps, records = runner(
        spec,
        R_eps=cfg.get(f"{kind}.R_eps", 40.0),
        theta=cfg.get(f"{kind}.theta", 0.5),
        eta=cfg.get(f"{kind}.eta", 1.0),
        beta=cfg.get(f"{kind}.beta", 2.0),
        n_seeds=int(args.seeds or cfg.get(f"{kind}.n_seeds", 8)),
        master_seed=args.seed,
        v_min=cfg.get("run.v_min"),
        c_s=cfg.get("run.c_s", 2.0),
        workers=resolve_workers(args.workers),
        solver=solver_params_from(cfg) or None,
    )
    outputs = []
    csv_path = out / "steps.csv"
    write_records_csv(
        csv_path,
        [s.to_json() for s in steps],
        ["n", "r_n", "R_prev", "R_next", "h_n", "t_mean", "t_std", "tau_n", "censored_frac"],
    )
    outputs.append(str(csv_path))
    raw_csv = out / "records.csv"
    write_records_csv(
        raw_csv, sorted(records, key=lambda r: (r["seed"], r["step"])),
        ["seed", "step", "r_n", "R_prev", "R_next", "h_n", "t_n", "censored"],
    )
    outputs.append(str(raw_csv))
    dat = out / "t_n.dat"
    write_dat(dat, [(s.r_n, s.t_mean) for s in steps])
    outputs.append(str(dat))
    summary = out / "summary.json"
    summary.write_text(json.dumps(
        {"schema": 1, "kind": kind, "gamma": sched.gamma,
         "radii": list(sched.radii), "steps": [s.to_json() for s in steps]},
        indent=2, sort_keys=True))
    outputs.append(str(summary))
    finish_manifest(manifest, outputs)
    return 0


def cmd_boxcheck(args, cfg):
    spec = FieldSpec.from_config(cfg)
    out = Path(args.out)
    manifest = start_manifest(out, "boxcheck", cfg, args.seed, args.force)
    res, rows = box_criterion(
        r=cfg.get("box.r", 200.0),
        w=cfg.get("box.w", 40.0),
        field_spec=spec,
        n_seeds=int(args.seeds or cfg.get("box.n_seeds", 20)),
        t_max=cfg.get("box.t_max", 600.0),
        master_seed=args.seed,
        v_min=cfg.get("run.v_min"),
        dx=cfg.get("box.dx", 0.25),
        stab_horizon=cfg.get("box.stab_horizon", 8.0),
        workers=resolve_workers(args.workers),
        solver=solver_params_from(cfg) or None,
    )
    outputs = []
    csv_path = out / "runs.csv"
    write_records_csv(csv_path, sorted(rows, key=lambda r: r["seed"]),
                      ["seed", "success", "empty_seed", "pinned", "t_hit"])
    outputs.append(str(csv_path))
    summary = out / "summary.json"
    summary.write_text(json.dumps(res.to_json(), indent=2, sort_keys=True))
    outputs.append(str(summary))
    finish_manifest(manifest, outputs)
    return 0


def cmd_conc(args, cfg):
    out = Path(args.out)
    manifest = start_manifest(out, f"conc {args.check}", cfg, args.seed, args.force)
    if args.check == "verify-alt":
        paths = reflected_walk(args.paths, args.N, args.T, seed=args.seed)
        report = mc_verify_alt(paths, k_max=args.kmax)
        extra = {
            "hoeffding": conditional_hoeffding_check(paths),
            "indicator_maximal": indicator_maximal_check(
                paths, paths.values[:, -1] >= args.T / 2, 0.5
            ),
        }
        report["companions"] = {k: {"ok": v["ok"]} for k, v in extra.items()}
    else:
        raise ConfigError(f"unknown conc check {args.check!r}")
    summary = out / "report.json"
    summary.write_text(json.dumps(report, indent=2, sort_keys=True, default=float))
    finish_manifest(manifest, [str(summary)])
    return 0


def cmd_report(args, cfg):
    """Recompute summaries from raw CSVs; no simulation."""
    out = Path(args.out)
    csv_path = out / "records.csv"
    if not csv_path.exists():
        raise ConfigError(f"no records.csv under {out}")
    import csv as _csv

    with open(csv_path) as fh:
        rows = list(_csv.DictReader(fh))
    if rows and "scale" in rows[0]:
        records = [
            {
                "scale": float(r["scale"]), "seed": int(r["seed"]),
                "dist": float(r["dist"]), "h": float(r["h"]),
                "value": float(r["value"]), "censored": r["censored"] not in ("0", "False", ""),
                "cap": float(r["cap"]),
            }
            for r in rows
        ]
        stats = fluct_report(records)
        (out / "summary.json").write_text(json.dumps(stats.to_json(), indent=2, sort_keys=True))
        return 0
    raise ConfigError("records.csv schema not recognized by report")


# ---------------------------------------------------------------------------
# argument plumbing


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="curvelab", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="TOML config with dotted keys")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--force", action="store_true", help="overwrite an existing run")
        p.add_argument("--seeds", type=int, default=None, help="ensemble size override")

    for name in ("gen-field", "evolve", "arrival", "vhom", "fluct", "ball", "hole", "boxcheck", "report"):
        p = sub.add_parser(name)
        common(p)
        if name == "vhom":
            p.add_argument("--scales", default=None, help="comma-separated scales")

    p = sub.add_parser("conc")
    p.add_argument("check", choices=["verify-alt"])
    common(p)
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--T", type=float, default=8.0)
    p.add_argument("--kmax", type=int, default=3)
    return top


_COMMANDS = {
    "gen-field": cmd_gen_field,
    "evolve": cmd_evolve,
    "arrival": cmd_arrival,
    "vhom": cmd_vhom,
    "fluct": cmd_fluct,
    "ball": lambda a, c: _schedule_cmd(a, c, "ball"),
    "hole": lambda a, c: _schedule_cmd(a, c, "hole"),
    "boxcheck": cmd_boxcheck,
    "conc": cmd_conc,
    "report": cmd_report,
}


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else CONFIG_ERROR
    try:
        cfg = load_config(args.config)
        if "rng.seed" in cfg and args.seed is None:
            args.seed = int(cfg["rng.seed"])
        if args.seed is None:
            args.seed = 0
        return _COMMANDS[args.command](args, cfg)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_ERROR


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
