"""Grid-native set notions: fatness, envelopment, hole filling, coarsening,
stability audits, and effective-minimum-speed verification.

All operations are pure: input masks are never mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .field import CoefficientField
from .grid import FOUR_CONNECTED, GridSet
from .levelset import SolverParams, evolve

__all__ = [
    "dilate",
    "erode",
    "opening",
    "is_h_fat",
    "h_envelops",
    "fill_small_holes",
    "coarsen",
    "hausdorff_excess",
    "StabilityReport",
    "is_stable",
    "stabilize",
    "check_effective_speed",
]

# Default audit tolerance in cells: 1.5 * dx.
RETREAT_TOL_CELLS = 1.5


def dilate(S: GridSet, r: float) -> GridSet:
    """Minkowski sum S + closed ball of radius r (exact EDT thresholding)."""
    if r < 0:
        raise ValueError("dilation radius must be nonnegative")
    if r == 0 or S.is_empty():
        return S.with_mask(S.mask.copy())
    return S.with_mask(S.edt_out() <= r + 1e-9 * S.grid.dx)


def erode(S: GridSet, r: float) -> GridSet:
    """Erosion by the closed ball of radius r."""
    if r < 0:
        raise ValueError("erosion radius must be nonnegative")
    if r == 0:
        return S.with_mask(S.mask.copy())
    return S.with_mask(S.edt_in() > r + 1e-9 * S.grid.dx)


def opening(S: GridSet, r: float) -> GridSet:
    return dilate(erode(S, r), r)


def _within_band(a: GridSet, b: GridSet, band: float) -> bool:
    """Every node of the symmetric difference lies within `band` of both sets."""
    diff = a.mask ^ b.mask
    if not diff.any():
        return True
    da = a.edt_out()[diff & ~a.mask]
    db = b.edt_out()[diff & ~b.mask]
    tol = band + 1e-9
    return bool((da <= tol).all() and (db <= tol).all())


def is_h_fat(S: GridSet, h: float) -> bool:
    """S equals the union of its contained radius-h balls (opening fixpoint,
    up to a one-cell rasterization band)."""
    if h < S.grid.dx:
        raise ValueError("fatness scale must be at least one cell")
    if S.is_empty():
        return True
    return _within_band(S, opening(S, h), math.sqrt(2.0) * S.grid.dx)


def h_envelops(S1: GridSet, S2: GridSet, h: float) -> bool:
    """True iff every complement component H of S1 has H & S2 empty or
    H inside S1 + B_h.  Complement components use 4-connectivity; a
    component touching the grid boundary counts as unbounded and is never
    fillable."""
    if h < S1.grid.dx:
        raise ValueError("envelopment scale must be at least one cell")
    if not S1.grid.same_layout(S2.grid):
        raise ValueError("sets live on different grids")
    labels, n, touches = S1.complement_components()
    if n == 0:
        return True
    hits = np.bincount(labels[S2.mask & ~S1.mask], minlength=n + 1)[1:] > 0
    if not hits.any():
        return True
    reach = S1.edt_out() <= h + 1e-9 * S1.grid.dx
    out_of_reach = np.bincount(labels[~reach & (labels > 0)], minlength=n + 1)[1:] > 0
    bad = hits & (out_of_reach | touches)
    return not bad.any()


def fill_small_holes(S: GridSet, h: float) -> GridSet:
    """Union of S with every bounded complement component inside S + B_h."""
    if h < S.grid.dx:
        raise ValueError("filling scale must be at least one cell")
    labels, n, touches = S.complement_components()
    if n == 0:
        return S.with_mask(S.mask.copy())
    reach = S.edt_out() <= h + 1e-9 * S.grid.dx
    out_of_reach = np.bincount(labels[~reach & (labels > 0)], minlength=n + 1)[1:] > 0
    fill = ~(out_of_reach | touches)
    if not fill.any():
        return S.with_mask(S.mask.copy())
    lut = np.concatenate(([False], fill))
    return S.with_mask(S.mask | lut[labels])


def coarsen(S: GridSet, h: float) -> GridSet:
    """Union of the axis-aligned h-cells (anchored at h*Z^2) meeting S."""
    if h < S.grid.dx:
        raise ValueError("coarsening scale must be at least one cell")
    g = S.grid
    ix = np.floor(g.xs() / h).astype(np.int64)
    iy = np.floor(g.ys() / h).astype(np.int64)
    cx = ix - ix.min()
    cy = iy - iy.min()
    hit = np.zeros((cy.max() + 1, cx.max() + 1), dtype=bool)
    jj, ii = np.nonzero(S.mask)
    hit[cy[jj], cx[ii]] = True
    return S.with_mask(hit[cy[:, None], cx[None, :]])


def hausdorff_excess(A: GridSet, B: GridSet) -> float:
    """sup over nodes of A of dist(node, B); 0 when A is covered by B."""
    if A.is_empty():
        return 0.0
    if B.is_empty():
        return math.inf
    vals = B.edt_out()[A.mask]
    return float(vals.max())


# ---------------------------------------------------------------------------
# stability audits (dynamic surrogate: no retreat over a horizon)


@dataclass(frozen=True)
class StabilityReport:
    is_stable: bool
    max_retreat: float
    horizon: float
    tol: float

    def to_json(self) -> dict:
        return {
            "is_stable": self.is_stable,
            "max_retreat": self.max_retreat,
            "horizon": self.horizon,
            "tol": self.tol,
        }


def is_stable(
    S: GridSet,
    field: CoefficientField,
    horizon: float,
    tol: float | None = None,
    params: SolverParams | None = None,
) -> StabilityReport:
    """Evolve S for the horizon; stable iff the set never recedes beyond tol.

    max_retreat is the largest Hausdorff excess of S over a snapshot.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if tol is None:
        tol = RETREAT_TOL_CELLS * S.grid.dx
    params = params or SolverParams(record_dt=horizon / 8)
    worst = 0.0
    if not S.is_empty():
        for t, snap in evolve(S, field, horizon, params):
            worst = max(worst, hausdorff_excess(S, snap))
            if worst > tol and t < horizon:
                break
    return StabilityReport(worst <= tol, worst, horizon, tol)


def stabilize(
    S: GridSet,
    field: CoefficientField,
    horizon: float,
    params: SolverParams | None = None,
) -> GridSet:
    """Running intersection of the evolution over the horizon.

    Candidate generator for stable approximations: the caller audits the
    result with is_stable and the sandwich conditions; an empty result is a
    valid (reported) outcome, not an error.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    params = params or SolverParams(record_dt=horizon / 16)
    keep = S.mask.copy()
    for _, snap in evolve(S, field, horizon, params):
        keep &= snap.mask
    return S.with_mask(keep)


def check_effective_speed(
    S: GridSet,
    field: CoefficientField,
    v: float,
    h: float,
    M: GridSet | None,
    horizon: float,
    params: SolverParams | None = None,
) -> tuple[bool, float | None]:
    """Verify (R_t(S) & M) + B_h is h-enveloped by R_{t + h/v}(S) for every
    snapshot pair up to the horizon; returns (ok, first failing t)."""
    if v <= 0:
        raise ValueError("speed must be positive")
    if h < 2 * S.grid.dx:
        raise ValueError("scale h must be at least two cells")
    if M is not None and M.is_empty():
        return True, None
    lag = h / v
    k = 4  # snapshots per lag interval
    params = params or SolverParams()
    from dataclasses import replace

    params = replace(params, record_dt=lag / k)
    traj = evolve(S, field, horizon + lag, params)
    for n in range(len(traj)):
        m = n + k
        if m >= len(traj) or traj[n][0] > horizon:
            break
        t, snap_t = traj[n]
        _, snap_lag = traj[m]
        grown = dilate(snap_t if M is None else snap_t.with_mask(snap_t.mask & M.mask), h)
        if grown.is_empty():
            continue
        if not h_envelops(snap_lag, grown, h):
            return False, t
    return True, None
