"""Ensemble orchestration: seeded realizations, fluctuation statistics, and
the box-criterion pinning/depinning probe.

Determinism contract: realization i draws its randomness from a Philox
stream keyed by (master_seed, i, stream_tag); results are reduced in task
order, so output files are byte-identical for any worker count.  Stream
tag 0 is reserved for obstacle sampling, tag 1 for auxiliary noise.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .arrival import DEFAULT_CS, truncated_arrival
from .field import FieldSpec, RectRegion, restrict
from .grid import Grid2D, GridSet
from .levelset import SolverParams, Workspace, evolve, init_from_set, reinit, step
from . import geom
from .io import write_records_csv

__all__ = [
    "EnsembleConfig",
    "EnsembleStats",
    "ScaleStats",
    "run_ensemble",
    "fluct_report",
    "box_criterion",
    "BoxResult",
    "wilson_interval",
    "parallel_map",
    "resolve_workers",
    "realization_seed",
]

FLUCT_COLUMNS = ["scale", "seed", "dist", "h", "value", "censored", "cap"]


def resolve_workers(requested: int | None) -> int:
    if requested is not None and requested > 0:
        return requested
    env = os.environ.get("CURVELAB_WORKERS")
    if env:
        return max(int(env), 1)
    return 1


def realization_seed(master_seed: int, index: int, tag: int = 0) -> int:
    """Injective 64-bit key for (master seed, realization, stream tag)."""
    h = np.random.SeedSequence(master_seed, spawn_key=(index, tag))
    return int(h.generate_state(1, np.uint64)[0])


def parallel_map(fn, tasks, workers: int = 1):
    """Order-preserving map; results independent of the worker count."""
    tasks = list(tasks)
    workers = resolve_workers(workers)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(len(tasks) // (4 * workers), 1)
        return list(pool.map(fn, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# ensemble statistics


@dataclass(frozen=True)
class ScaleStats:
    scale: float
    n: int
    n_uncensored: int
    mean: float
    std: float
    quantiles: tuple[float, float, float, float, float]  # 5/25/50/75/95
    censored_frac: float
    normalized_std: float  # std / sqrt(h * dist)

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["quantiles"] = list(self.quantiles)
        return d


@dataclass
class EnsembleStats:
    scales: list[ScaleStats]
    slope: float | None = None
    slope_ci: tuple[float, float] | None = None

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "scales": [s.to_json() for s in self.scales],
            "slope": self.slope,
            "slope_ci": list(self.slope_ci) if self.slope_ci else None,
        }


def fluct_report(records: list[dict], min_uncensored: int = 30) -> EnsembleStats:
    """Per-scale spread of truncated arrivals and the log-log slope of
    std against distance.

    Scales with fewer than min_uncensored uncensored records are omitted.
    The slope (with a 95% OLS confidence band) is reported only when at
    least four scales survive.
    """
    by_scale: dict[float, list[dict]] = {}
    for rec in records:
        by_scale.setdefault(float(rec["scale"]), []).append(rec)
    out = []
    for scale in sorted(by_scale):
        rows = by_scale[scale]
        vals = np.array([r["value"] for r in rows], dtype=float)
        cens = np.array([bool(int(r["censored"])) for r in rows])
        n_unc = int((~cens).sum())
        if n_unc < min_uncensored:
            continue
        h = float(rows[0]["h"])
        dist = float(np.mean([r["dist"] for r in rows]))
        std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        qs = tuple(float(q) for q in np.quantile(vals, [0.05, 0.25, 0.5, 0.75, 0.95]))
        out.append(
            ScaleStats(
                scale, len(rows), n_unc, float(vals.mean()), std, qs,
                float(cens.mean()), std / math.sqrt(max(h * dist, 1e-300)),
            )
        )
    stats = EnsembleStats(out)
    usable = [s for s in out if s.std > 0]
    if len(usable) >= 4:
        x = np.log([s.scale for s in usable])
        y = np.log([s.std for s in usable])
        n = len(x)
        xm, ym = x.mean(), y.mean()
        sxx = float(np.sum((x - xm) ** 2))
        slope = float(np.sum((x - xm) * (y - ym)) / sxx)
        resid = y - (ym + slope * (x - xm))
        se = math.sqrt(float(np.sum(resid**2)) / max(n - 2, 1) / sxx)
        from scipy import stats as sps

        tcrit = float(sps.t.ppf(0.975, max(n - 2, 1)))
        stats.slope = slope
        stats.slope_ci = (slope - tcrit * se, slope + tcrit * se)
    return stats


# ---------------------------------------------------------------------------
# generic ensembles


@dataclass(frozen=True)
class EnsembleConfig:
    """One parallel experiment: `kind` picks the per-realization task."""

    kind: str  # "fluct"
    field: FieldSpec
    master_seed: int = 0
    n_seeds: int = 30
    workers: int = 1
    scales: tuple[float, ...] = (50.0,)
    h_exponent: float = 0.5
    v_min: float | None = None
    c_s: float = DEFAULT_CS
    lateral_frac: float = 0.35
    solver: dict | None = None

    def v_min_value(self) -> float:
        return self.v_min if self.v_min is not None else 0.5 * abs(self.field.f_uni)


def _fluct_single(args):
    (cfg, scale_idx, seed_idx) = args
    spec = cfg.field
    dist = cfg.scales[scale_idx]
    h = dist**cfg.h_exponent
    lateral = max(3.0 * h, cfg.lateral_frac * dist, 8.0)
    dx = max(dist / 512.0, 0.25)
    ymin, ymax = -2.0 * h - 2.0, dist + h + 2.0
    nx = int(math.ceil(2 * lateral / dx)) + 1
    ny = int(math.ceil((ymax - ymin) / dx)) + 1
    grid = Grid2D(nx, ny, dx, (-lateral, ymin))
    seed = realization_seed(cfg.master_seed, scale_idx * 100003 + seed_idx, 0)
    field_r = spec.realize(grid.bounds(), seed)
    S = GridSet.stadium(grid, (0.0, 1.0), h, 10.0 * lateral)
    params = SolverParams(**(cfg.solver or {}))
    params = replace(params, record_dt=max(h / 8.0, 2 * dx))
    rec = truncated_arrival(
        field_r, S, (0.0, dist), h, cfg.v_min_value(), cfg.c_s, params, seed=seed_idx
    )
    row = rec.to_row()
    row["scale"] = dist
    row["seed"] = seed_idx
    return row


_TASKS = {"fluct": _fluct_single}


def run_ensemble(config: EnsembleConfig, out_csv=None) -> tuple[list[dict], EnsembleStats]:
    """Run every (scale, seed) task; persist raw records before statistics.

    Deterministic given master_seed regardless of parallelism.  A worker
    failure keeps the completed records (written if out_csv is set) and
    re-raises with context.
    """
    if config.kind not in _TASKS:
        raise ValueError(f"unknown ensemble kind {config.kind!r}")
    fn = _TASKS[config.kind]
    tasks = [
        (config, si, ki)
        for si in range(len(config.scales))
        for ki in range(config.n_seeds)
    ]
    records: list[dict] = []
    try:
        records = parallel_map(fn, tasks, config.workers)
    except Exception:
        if out_csv is not None and records:
            write_records_csv(out_csv, records, FLUCT_COLUMNS)
        raise
    records.sort(key=lambda r: (r["scale"], r["seed"]))
    if out_csv is not None:
        write_records_csv(out_csv, records, FLUCT_COLUMNS)
    return records, fluct_report(records)


# ---------------------------------------------------------------------------
# box criterion


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(center - half, 0.0), min(center + half, 1.0))


@dataclass
class BoxResult:
    p_hat: float
    wilson: tuple[float, float]
    n: int
    successes: int
    empty_seed_failures: int
    pinned: int
    r: float
    w: float

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["wilson"] = list(self.wilson)
        return d


def _box_single(args):
    (spec_cfg, r, w, t_max, seed, v_min, dx, stab_horizon, solver) = args
    spec = FieldSpec(**spec_cfg)
    collar = 1.75  # restriction blend reaches 1 beyond Q; add margin
    xmin, xmax = -collar, w + collar
    ymin, ymax = -w - collar, r + collar
    nx = int(math.ceil((xmax - xmin) / dx)) + 1
    ny = int(math.ceil((ymax - ymin) / dx)) + 1
    grid = Grid2D(nx, ny, dx, (xmin, ymin))
    base = spec.realize(grid.bounds(), seed)
    q = RectRegion(0.0, w, -w, r)
    field_q = restrict(base, q)
    params = SolverParams(**(solver or {}))

    strip = GridSet.rectangle(grid, 0.0, w, -w, 0.0)
    seed_set = geom.stabilize(strip, field_q, stab_horizon, replace(params, record_dt=stab_horizon / 8))
    if seed_set.is_empty():
        return {"seed": seed, "success": False, "empty_seed": True, "pinned": False, "t_hit": float("nan")}

    top = GridSet.rectangle(grid, 0.0, w, r - 1.5 * dx, r + 1.5 * dx)
    state = {"hit": False, "area": -1, "stag_since": 0.0, "pinned": False, "t": 0.0}
    stagnation_window = 5.0 / v_min

    def probe(t, mask):
        state["t"] = t
        if (mask & top.mask).any():
            state["hit"] = True
            return True
        area = int(mask.sum())
        if area == state["area"]:
            if t - state["stag_since"] >= stagnation_window:
                state["pinned"] = True
                return True
        else:
            state["area"] = area
            state["stag_since"] = t
        return False

    evolve(seed_set, field_q, t_max, replace(params, record_dt=max(1.0, 4 * dx)),
           on_snapshot=probe, keep_masks=False)
    return {
        "seed": seed,
        "success": bool(state["hit"]),
        "empty_seed": False,
        "pinned": bool(state["pinned"]),
        "t_hit": state["t"] if state["hit"] else float("nan"),
    }


def box_criterion(
    r: float,
    w: float,
    field_spec: FieldSpec,
    n_seeds: int,
    t_max: float,
    master_seed: int = 0,
    v_min: float | None = None,
    dx: float = 0.25,
    stab_horizon: float = 8.0,
    workers: int = 1,
    solver: dict | None = None,
) -> tuple[BoxResult, list[dict]]:
    """Estimate the probability that a stabilized bottom-strip set, evolved
    under the field restricted to the box [0,w] x [-w,r], reaches the top.

    A run counts as success iff the evolution meets [0,w] x {r} (within one
    cell) before t_max; runs whose covered area stalls for 5/v_min are
    declared pinned early.  An empty stabilized seed is a (separately
    flagged) failure.
    """
    if r <= 1 or w <= 0:
        raise ValueError("needs box height r > 1 and width w > 0")
    if v_min is None:
        v_min = 0.5 * abs(field_spec.f_uni) if field_spec.f_uni else 0.05
    spec_cfg = {f: getattr(field_spec, f) for f in field_spec.__dataclass_fields__}
    tasks = [
        (spec_cfg, r, w, t_max, realization_seed(master_seed, k, 0), v_min, dx, stab_horizon, solver)
        for k in range(n_seeds)
    ]
    rows = parallel_map(_box_single, tasks, workers)
    succ = sum(1 for x in rows if x["success"])
    res = BoxResult(
        p_hat=succ / n_seeds,
        wilson=wilson_interval(succ, n_seeds),
        n=n_seeds,
        successes=succ,
        empty_seed_failures=sum(1 for x in rows if x["empty_seed"]),
        pinned=sum(1 for x in rows if x["pinned"]),
        r=r,
        w=w,
    )
    return res, rows
