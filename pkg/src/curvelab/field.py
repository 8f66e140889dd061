"""Random coefficient fields: curvature coefficient a and forcing F.

The forcing is F(x) = f_uni - F_obst(x) + delta_f with
F_obst(x) = max_i phi(|x - X_i|) for a Poisson point cloud (X_i) and a
radial obstacle profile phi supported in the closed unit ball.

Restricting a field to a region Q tapers the curvature amplitude sqrt(a)
to zero across dist(x, Q) in (2/3, 1) and blends the forcing to the
constant -max(c1f, 6*c1a) across dist(x, Q) in (0, 1/3), which traps
evolutions started inside Q near Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .grid import Grid2D, GridSet

__all__ = [
    "ObstacleShape",
    "cone_profile",
    "plateau_profile",
    "table_profile",
    "PoissonPoints",
    "sample_poisson",
    "eval_obstacle",
    "CoefficientField",
    "FieldSpec",
    "RectRegion",
    "restrict",
    "shift_forcing",
]

SUPPORT_RADIUS = 1.0  # obstacle support is the closed unit ball


class ParameterError(ValueError):
    """Invalid field parameters."""


class DomainError(ValueError):
    """Evaluation outside the padded domain."""


# ---------------------------------------------------------------------------
# obstacle shapes


@dataclass(frozen=True)
class ObstacleShape:
    """Radial profile phi on [0, 1], zero beyond, with a known Lipschitz bound."""

    name: str
    peak: float
    lipschitz: float
    _table_r: np.ndarray | None = None
    _table_v: np.ndarray | None = None

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.name == "cone":
            out = self.peak * np.clip(1.0 - s, 0.0, None)
        elif self.name == "plateau":
            out = self.peak * np.clip(2.0 * (1.0 - s), 0.0, 1.0)
        else:
            out = np.interp(s, self._table_r, self._table_v, right=0.0)
        return np.where(s >= SUPPORT_RADIUS, 0.0, out)


def cone_profile(peak: float = 1.0) -> ObstacleShape:
    """phi(s) = peak * (1 - s) on [0, 1]."""
    return ObstacleShape("cone", peak=peak, lipschitz=peak)


def plateau_profile(peak: float = 1.0) -> ObstacleShape:
    """Flat top at peak on [0, 1/2], linear to zero at 1."""
    return ObstacleShape("plateau", peak=peak, lipschitz=2.0 * peak)


def table_profile(radii, values) -> ObstacleShape:
    """Piecewise-linear profile from sampled (radius, value) pairs."""
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.ndim != 1 or r.shape != v.shape or r.size < 2:
        raise ParameterError("table profile needs matching 1-d radius/value arrays")
    if (np.diff(r) <= 0).any() or (v < 0).any():
        raise ParameterError("table radii must increase and values be nonnegative")
    if r[-1] < SUPPORT_RADIUS:
        r = np.append(r, SUPPORT_RADIUS)
        v = np.append(v, 0.0)
    if v[-1] != 0.0 or r[-1] > SUPPORT_RADIUS:
        raise ParameterError("table profile must vanish at the unit support radius")
    lip = float(np.max(np.abs(np.diff(v) / np.diff(r))))
    return ObstacleShape("table", peak=float(v.max()), lipschitz=lip,
                         _table_r=r, _table_v=v)


# ---------------------------------------------------------------------------
# Poisson points with a unit-cell spatial hash


@dataclass(frozen=True)
class PoissonPoints:
    """Seeded Poisson point cloud on a padded rectangle."""

    points: np.ndarray  # (n, 2)
    intensity: float
    domain: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    pad: float
    seed: int

    def __post_init__(self):
        # unit-cell buckets for O(1) amortized obstacle lookup
        object.__setattr__(self, "_hash", _build_hash(self.points))

    def count(self) -> int:
        return self.points.shape[0]

    def near(self, x: float, y: float) -> np.ndarray:
        """Indices of points within SUPPORT_RADIUS of (x, y) (superset, 3x3 cells)."""
        buckets, order = self._hash
        out = []
        cx, cy = math.floor(x), math.floor(y)
        for bx in (cx - 1, cx, cx + 1):
            for by in (cy - 1, cy, cy + 1):
                rng = buckets.get((bx, by))
                if rng is not None:
                    out.append(order[rng[0]:rng[1]])
        if not out:
            return np.empty(0, dtype=np.intp)
        return np.concatenate(out)

    def translated(self, dxy: tuple[float, float]) -> "PoissonPoints":
        return PoissonPoints(
            self.points + np.asarray(dxy), self.intensity, self.domain, self.pad, self.seed
        )


def _build_hash(points: np.ndarray):
    """Unit-cell buckets: {cell: (start, stop)} ranges into a flat index array."""
    if points.shape[0] == 0:
        return {}, np.empty(0, dtype=np.intp)
    from collections import defaultdict

    per_cell = defaultdict(list)
    for idx, (px, py) in enumerate(points):
        per_cell[(math.floor(px), math.floor(py))].append(idx)
    buckets = {}
    flat = []
    pos = 0
    for key, idxs in per_cell.items():
        buckets[key] = (pos, pos + len(idxs))
        flat.extend(idxs)
        pos += len(idxs)
    return buckets, np.asarray(flat, dtype=np.intp)


def rng_stream(*key_parts: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed injectively by integer parts."""
    root, *spawn = [int(k) for k in key_parts]
    seq = np.random.SeedSequence(root, spawn_key=tuple(spawn))
    return np.random.Generator(np.random.Philox(seq))


def sample_poisson(
    domain: tuple[float, float, float, float],
    intensity: float,
    pad: float = 1.0,
    seed: int = 0,
) -> PoissonPoints:
    """Poisson(intensity * area) points, uniform on the domain expanded by pad."""
    if intensity < 0:
        raise ParameterError(f"intensity must be nonnegative, got {intensity}")
    if pad < 1.0:
        raise ParameterError(f"pad must be >= 1 (obstacle support radius), got {pad}")
    xmin, xmax, ymin, ymax = domain
    if not (xmax > xmin and ymax > ymin):
        raise ParameterError(f"degenerate domain {domain}")
    rng = rng_stream(seed, 0)
    w = (xmax - xmin) + 2 * pad
    h = (ymax - ymin) + 2 * pad
    n = int(rng.poisson(intensity * w * h)) if intensity > 0 else 0
    pts = rng.random((n, 2))
    pts[:, 0] = xmin - pad + w * pts[:, 0]
    pts[:, 1] = ymin - pad + h * pts[:, 1]
    return PoissonPoints(pts, intensity, domain, pad, seed)


def eval_obstacle(shape: ObstacleShape, pts: PoissonPoints, x, y=None) -> float:
    """F_obst(x) = max_i phi(|x - X_i|); zero when no point is within unit range."""
    if y is None:
        x, y = x
    idx = pts.near(x, y)
    if idx.size == 0:
        return 0.0
    d = np.hypot(pts.points[idx, 0] - x, pts.points[idx, 1] - y)
    d = d[d < SUPPORT_RADIUS]
    if d.size == 0:
        return 0.0
    return float(np.max(shape(d)))


# ---------------------------------------------------------------------------
# regions for restriction


@dataclass(frozen=True)
class RectRegion:
    """Closed axis-aligned rectangle with an exact distance function."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def dist(self, x, y):
        ddx = np.maximum(np.maximum(self.xmin - np.asarray(x), np.asarray(x) - self.xmax), 0.0)
        ddy = np.maximum(np.maximum(self.ymin - np.asarray(y), np.asarray(y) - self.ymax), 0.0)
        return np.hypot(ddx, ddy)

    def is_empty(self) -> bool:
        return self.xmax < self.xmin or self.ymax < self.ymin


def _region_dist(region, x, y):
    if isinstance(region, RectRegion):
        return region.dist(x, y)
    if isinstance(region, GridSet):
        # nearest-node lookup into the cached EDT
        edt = region.edt_out()
        g = region.grid
        xi = np.clip(np.rint((np.asarray(x) - g.origin[0]) / g.dx).astype(int), 0, g.nx - 1)
        yi = np.clip(np.rint((np.asarray(y) - g.origin[1]) / g.dx).astype(int), 0, g.ny - 1)
        return edt[yi, xi]
    raise ParameterError(f"unsupported restriction region {type(region)!r}")


# ---------------------------------------------------------------------------
# the coefficient field


@dataclass(frozen=True)
class CoefficientField:
    """Isotropic curvature coefficient a plus heterogeneous forcing.

    Immutable; safe to share read-only across workers.  `restriction` is a
    RectRegion or GridSet; `forcing_shift` is the additive constant added to
    the forcing before any restriction blend.
    """

    a: float = 1.0
    f_uni: float = 1.0
    shape: ObstacleShape | None = None
    points: PoissonPoints | None = None
    c1a: float | None = None
    c1f: float | None = None
    restriction: RectRegion | GridSet | None = None
    forcing_shift: float = 0.0

    def __post_init__(self):
        if self.a < 0:
            raise ParameterError("curvature coefficient a must be >= 0")
        if (self.shape is None) != (self.points is None):
            raise ParameterError("obstacles need both a shape and a point cloud")
        if self.c1a is None:
            object.__setattr__(self, "c1a", max(self.a, math.sqrt(self.a)) if self.a > 0 else 0.0)
        if self.c1f is None:
            peak = self.shape.peak if self.shape is not None else 0.0
            lip = self.shape.lipschitz if self.shape is not None else 0.0
            object.__setattr__(self, "c1f", max(abs(self.f_uni) + peak, lip))

    # -- bounds used by CFL and the restriction blend ----------------------

    @property
    def blend_floor(self) -> float:
        """The constant forcing value far outside a restriction region."""
        return -max(self.c1f, 6.0 * self.c1a)

    def forcing_bound(self) -> float:
        """max |F| over the plane after shift (and blend floor when restricted)."""
        peak = self.shape.peak if self.shape is not None else 0.0
        base = max(abs(self.f_uni + self.forcing_shift),
                   abs(self.f_uni - peak + self.forcing_shift))
        if self.restriction is not None:
            base = max(base, abs(self.blend_floor))
        return base

    # -- pointwise evaluation ----------------------------------------------

    def raw_forcing(self, x, y):
        """f_uni - F_obst + shift, before any restriction blend."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.shape is None:
            fob = np.zeros(np.broadcast(x, y).shape)
        elif x.ndim == 0:
            fob = eval_obstacle(self.shape, self.points, float(x), float(y))
        else:
            fob = np.array(
                [eval_obstacle(self.shape, self.points, float(a), float(b))
                 for a, b in zip(x.ravel(), y.ravel())]
            ).reshape(x.shape)
        return self.f_uni - fob + self.forcing_shift

    def eval_forcing(self, x, y=None):
        """Forcing at (x, y): raw value, then the restriction blend if set."""
        if y is None:
            x, y = x
        if self.points is not None:
            xmin, xmax, ymin, ymax = self.points.domain
            pad = self.points.pad
            inside = (
                (np.asarray(x) >= xmin - pad) & (np.asarray(x) <= xmax + pad)
                & (np.asarray(y) >= ymin - pad) & (np.asarray(y) <= ymax + pad)
            )
            if not np.all(inside):
                raise DomainError("forcing evaluated outside the padded obstacle domain")
        raw = self.raw_forcing(x, y)
        if self.restriction is None:
            out = raw
        else:
            out = self._blend(raw, _region_dist(self.restriction, x, y))
        return float(out) if np.ndim(out) == 0 else out

    def _blend(self, raw, d):
        """Piecewise forcing blend of the restricted field definition."""
        floor = self.blend_floor
        d = np.asarray(d, dtype=float)
        mid = 3.0 * (1.0 / 3.0 - d) * raw - 3.0 * d * max(self.c1f, 6.0 * self.c1a)
        return np.where(d <= 0.0, raw, np.where(d < 1.0 / 3.0, mid, floor))

    def amplitude_factor(self, x, y=None):
        """Taper applied to sqrt(a): 1 up to dist 2/3, linear 3(1-d) to 0 at 1."""
        if y is None:
            x, y = x
        if self.restriction is None:
            return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        d = _region_dist(self.restriction, x, y)
        return np.clip(3.0 * (1.0 - np.asarray(d, dtype=float)), 0.0, 1.0)

    # -- grid evaluation (used by the solver) -------------------------------

    def forcing_grid(self, grid: Grid2D) -> np.ndarray:
        """Forcing sampled at every node, obstacle stamping vectorized per point."""
        F = np.full(grid.shape, float(self.f_uni + self.forcing_shift))
        if self.shape is not None and self.points.count() > 0:
            _stamp_obstacles(F, grid, self.shape, self.points.points)
        if self.restriction is not None:
            X, Y = grid.meshgrid()
            F = self._blend(F, _region_dist(self.restriction, X, Y))
        return F

    def curvature_grid(self, grid: Grid2D) -> float | np.ndarray:
        """Curvature coefficient at every node: a, tapered when restricted."""
        if self.restriction is None:
            return float(self.a)
        X, Y = grid.meshgrid()
        return self.a * self.amplitude_factor(X, Y) ** 2

    def max_curvature(self) -> float:
        return float(self.a)


def _stamp_obstacles(F, grid, shape, points):
    """F -= max-of-profiles, stamped over each point's support window."""
    dx = grid.dx
    ox, oy = grid.origin
    rad = int(math.ceil(SUPPORT_RADIUS / dx)) + 1
    ny, nx = F.shape
    fob = np.zeros_like(F)
    for px, py in points:
        ic = int(round((px - ox) / dx))
        jc = int(round((py - oy) / dx))
        i0, i1 = max(ic - rad, 0), min(ic + rad + 1, nx)
        j0, j1 = max(jc - rad, 0), min(jc + rad + 1, ny)
        if i0 >= i1 or j0 >= j1:
            continue
        xs = ox + dx * np.arange(i0, i1) - px
        ys = oy + dx * np.arange(j0, j1) - py
        d = np.hypot(xs[None, :], ys[:, None])
        np.maximum(fob[j0:j1, i0:i1], shape(d), out=fob[j0:j1, i0:i1])
    F -= fob


@dataclass(frozen=True)
class FieldSpec:
    """Declarative field description: realized per (domain, seed).

    profile is one of "cone", "plateau", or "table:<path>".  intensity 0
    means an obstacle-free field.
    """

    a: float = 1.0
    f_uni: float = 1.0
    intensity: float = 0.0
    profile: str = "cone"
    peak: float = 1.0
    delta_f: float = 0.0
    pad: float = 1.0

    def obstacle_shape(self) -> ObstacleShape | None:
        if self.intensity <= 0:
            return None
        if self.profile == "cone":
            return cone_profile(self.peak)
        if self.profile == "plateau":
            return plateau_profile(self.peak)
        if self.profile.startswith("table:"):
            data = np.loadtxt(self.profile.split(":", 1)[1], delimiter=",")
            return table_profile(data[:, 0], data[:, 1] * self.peak / max(data[:, 1].max(), 1e-300))
        raise ParameterError(f"unknown obstacle profile {self.profile!r}")

    def realize(self, domain: tuple[float, float, float, float], seed: int) -> CoefficientField:
        shape = self.obstacle_shape()
        pts = None
        if shape is not None:
            pts = sample_poisson(domain, self.intensity, self.pad, seed)
        return CoefficientField(
            a=self.a,
            f_uni=self.f_uni,
            shape=shape,
            points=pts,
            forcing_shift=self.delta_f,
        )

    def to_config(self) -> dict:
        return {
            "field.a": self.a,
            "field.f_uni": self.f_uni,
            "field.delta_f": self.delta_f,
            "obstacle.intensity": self.intensity,
            "obstacle.profile": self.profile,
            "obstacle.peak": self.peak,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "FieldSpec":
        return cls(
            a=float(cfg.get("field.a", 1.0)),
            f_uni=float(cfg.get("field.f_uni", 1.0)),
            intensity=float(cfg.get("obstacle.intensity", 0.0)),
            profile=str(cfg.get("obstacle.profile", "cone")),
            peak=float(cfg.get("obstacle.peak", 1.0)),
            delta_f=float(cfg.get("field.delta_f", 0.0)),
        )


def restrict(field: CoefficientField, region: RectRegion | GridSet) -> CoefficientField:
    """Return the field restricted to the closed region Q; the input is untouched."""
    if isinstance(region, RectRegion):
        if region.is_empty():
            raise ParameterError("restriction region is empty")
    elif isinstance(region, GridSet):
        if region.is_empty():
            raise ParameterError("restriction region is empty")
    else:
        raise ParameterError(f"unsupported region type {type(region)!r}")
    return replace(field, restriction=region)


def shift_forcing(field: CoefficientField, delta_f: float) -> CoefficientField:
    """Add a constant to the forcing (composes additively with prior shifts)."""
    return replace(field, forcing_shift=field.forcing_shift + delta_f)
