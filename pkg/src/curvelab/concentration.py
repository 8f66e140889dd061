"""Martingale concentration bounds: closed-form evaluators and Monte Carlo
verifiers.

Covers the classical Azuma tail, an exponential-tail alternative that only
needs increment bounds on a high-probability event, a Gaussian-tail
generalization valid up to an explicit deviation threshold, a conditional
Hoeffding lemma, and the indicator maximal bound.  Every evaluator is a pure
function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MartingalePaths",
    "azuma_classic_tail",
    "alt_moment_bound",
    "alt_moment_bound_unrestricted",
    "alt_tail",
    "gen_azuma_tail",
    "conditional_hoeffding_check",
    "indicator_maximal_check",
    "mc_verify_alt",
    "reflected_walk",
    "DEFAULT_ALT_TAIL_C",
]

# Tail prefactor for alt_tail: the underlying statement only asserts existence;
# this value dominates the empirical tails of the reflected +-1 walk reference
# family (N in 16..256, T in 2..16) with at least 2x margin.
DEFAULT_ALT_TAIL_C = 2.0

_PROB_SLACK = 1e-12


class DataError(ValueError):
    """Path ensemble violates the declared invariants."""


@dataclass
class MartingalePaths:
    """P sample paths of length N+1 with an event mask and increment bounds.

    values[p, n] = M_n on path p; event_mask marks membership in the good
    event E on which |increments| <= c_n holds; T_bound bounds |M_n|
    everywhere.
    """

    values: np.ndarray
    event_mask: np.ndarray
    T_bound: float
    c_n: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.event_mask = np.asarray(self.event_mask, dtype=bool)
        if self.values.ndim != 2:
            raise DataError("values must be (paths, N+1)")
        if self.event_mask.shape != (self.values.shape[0],):
            raise DataError("event mask must have one entry per path")
        if self.c_n.shape != (self.values.shape[1] - 1,):
            raise DataError("c_n must have one entry per step")

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1] - 1

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1)

    def validate(self) -> None:
        if self.values[:, 0].any():
            raise DataError("paths must start at 0")
        if np.abs(self.values).max() > self.T_bound + 1e-12:
            raise DataError("|M_n| exceeds the declared bound T")
        on = self.event_mask
        if on.any():
            inc = np.abs(self.increments()[on])
            if (inc > self.c_n[None, :] + 1e-12).any():
                raise DataError("increment bound violated on the event E")


def reflected_walk(n_paths: int, n_steps: int, T: float, seed: int = 0) -> MartingalePaths:
    """+-1 simple walk reflected at +-T, with E = the full sample space."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    steps = rng.integers(0, 2, size=(n_paths, n_steps)) * 2 - 1
    vals = np.zeros((n_paths, n_steps + 1))
    m = np.zeros(n_paths)
    for n in range(n_steps):
        m = m + steps[:, n]
        over = m > T
        m[over] = 2 * T - m[over]
        under = m < -T
        m[under] = -2 * T - m[under]
        vals[:, n + 1] = m
    return MartingalePaths(vals, np.ones(n_paths, bool), float(T), np.ones(n_steps))


# ---------------------------------------------------------------------------
# closed-form evaluators


def azuma_classic_tail(lam: float, c_list) -> float:
    """P[|M_N - M_0| >= lam] <= 2 exp(-lam^2 / (2 sum c_k^2))."""
    c = np.asarray(c_list, dtype=float)
    if lam < 0 or c.size == 0 or (c <= 0).any():
        raise ValueError("needs lam >= 0 and positive increment bounds")
    return 2.0 * math.exp(-(lam**2) / (2.0 * float(np.sum(c**2))))


def _alt_ct(T: float) -> float:
    return 2.0 * T * T / (T * T + 2.0 - math.e)


def alt_moment_bound(k: int, N: int, T: float, pE: float, pEc: float) -> float:
    """Bound on E[1_E M_N^{2k}]: (2k)! N^k pE + C(T) (2k)! N^k T^{2k} pEc,
    with C(T) = 2T^2/(T^2 + 2 - e)."""
    if T < 1:
        raise ValueError("needs T >= 1")
    if k < 0 or N < 0:
        raise ValueError("needs k, N >= 0")
    if pE < 0 or pEc < 0 or pE + pEc > 1.0 + _PROB_SLACK:
        raise ValueError("event probabilities must lie in the simplex")
    if k == 0:
        return pE + _alt_ct(T) * pEc
    fact = math.factorial(2 * k)
    nk = float(N) ** k
    return fact * nk * pE + _alt_ct(T) * fact * nk * T ** (2 * k) * pEc


def alt_moment_bound_unrestricted(k: int, N: int, T: float, pE: float, pEc: float) -> float:
    """Bound on E[M_N^{2k}]: adds (1 + C(T)(2k)! N^k) T^{2k} pEc."""
    if T < 1:
        raise ValueError("needs T >= 1")
    if k < 0 or N < 0:
        raise ValueError("needs k, N >= 0")
    fact = math.factorial(2 * k)
    nk = float(N) ** k
    return fact * nk * pE + (1.0 + _alt_ct(T) * fact * nk) * T ** (2 * k) * pEc


def alt_tail(lam: float, N: int, T: float, pEc: float, C: float = DEFAULT_ALT_TAIL_C):
    """Piecewise tail bound of the moment alternative.

    Below the threshold lam* = -log(pEc)/(2 log T) * sqrt(N) the bound decays
    as C exp(-lam/(2 sqrt N)); above it plateaus at C pEc^(1/(2 log T)).
    Returns (bound, threshold).
    """
    if not T > 1:
        raise ValueError("needs T > 1 (threshold undefined otherwise)")
    if N < 1:
        raise ValueError("needs N >= 1")
    if not 0 < pEc < 1:
        raise ValueError("needs 0 < P[E^c] < 1")
    lam_star = -math.log(pEc) / (2.0 * math.log(T)) * math.sqrt(N)
    if lam <= lam_star:
        return C * math.exp(-lam / (2.0 * math.sqrt(N))), lam_star
    return C * pEc ** (1.0 / (2.0 * math.log(T))), lam_star


def gen_azuma_tail(lam: float, c_list, T: float, N: int, pEc: float):
    """Gaussian-tail generalization: bound 4 exp(-lam^2/(4 sum c^2)), valid
    for 0 < lam <= lam0 with
    lam0 = -log((N + 8 T N^2 / sqrt(sum c^2)) pEc) * sum c^2 / T.

    Returns (bound, lam0, valid).
    """
    c = np.asarray(c_list, dtype=float)
    if c.size == 0 or (c <= 0).any():
        raise ValueError("needs positive increment bounds")
    if T <= 0 or N < 1:
        raise ValueError("needs T > 0 and N >= 1")
    if pEc < 0:
        raise ValueError("needs P[E^c] >= 0")
    s2 = float(np.sum(c**2))
    bound = 4.0 * math.exp(-(lam**2) / (4.0 * s2))
    if pEc == 0.0:
        return bound, math.inf, lam > 0
    arg = (N + 8.0 * T * N * N / math.sqrt(s2)) * pEc
    lam0 = -math.log(arg) * s2 / T
    return bound, lam0, 0 < lam <= lam0


# ---------------------------------------------------------------------------
# Monte Carlo verifiers (dyadic prefix-block filtration)


def _prefix_codes(increments: np.ndarray, level: int) -> np.ndarray:
    """Group paths by the sign pattern of their first `level` increments."""
    if level == 0:
        return np.zeros(increments.shape[0], dtype=np.int64)
    bits = (increments[:, :level] > 0).astype(np.int64)
    code = np.zeros(increments.shape[0], dtype=np.int64)
    for j in range(level):
        code = (code << 1) | bits[:, j]
    return code


def conditional_hoeffding_check(
    paths: MartingalePaths,
    block_level: int = 4,
    s_values=(-2.0, -1.0, -0.5, 0.5, 1.0, 2.0),
    margin: float = 0.05,
) -> dict:
    """Check E[exp(sX) | block] <= exp(s E[X|block] + s^2 (b-a)^2 / 8) + margin
    with X the increment following the conditioning prefix and [a, b] its range.
    """
    inc = paths.increments()
    if paths.n_steps <= block_level:
        raise ValueError("needs more steps than the conditioning level")
    X = inc[:, block_level]
    a, b = float(X.min()), float(X.max())
    if not np.isfinite([a, b]).all():
        raise DataError("unbounded conditioned variable")
    codes = _prefix_codes(inc, block_level)
    order = np.argsort(codes, kind="stable")
    codes_sorted = codes[order]
    X_sorted = X[order]
    boundaries = np.flatnonzero(np.diff(codes_sorted)) + 1
    blocks = np.split(X_sorted, boundaries)
    worst = -math.inf
    results = []
    for s in s_values:
        excess = -math.inf
        for blk in blocks:
            if blk.size < 8:
                continue
            lhs = float(np.mean(np.exp(s * blk)))
            rhs = math.exp(s * float(blk.mean()) + s * s * (b - a) ** 2 / 8.0)
            excess = max(excess, lhs - rhs)
        results.append({"s": s, "max_excess": excess, "ok": excess <= margin})
        worst = max(worst, excess)
    return {
        "ok": all(r["ok"] for r in results),
        "per_s": results,
        "margin": margin,
        "block_level": block_level,
        "range": (a, b),
    }


def indicator_maximal_check(
    paths: MartingalePaths,
    event: np.ndarray,
    delta: float,
    levels: int | None = None,
    margin: float | None = None,
) -> dict:
    """Empirical check of P[exists n: E[1_E | G_n] >= delta] <= P[E]/delta.

    Conditional expectations are block averages over the dyadic prefix
    filtration of the increments.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    event = np.asarray(event, dtype=bool)
    if event.shape != (paths.n_paths,):
        raise DataError("event must be a per-path mask")
    inc = paths.increments()
    levels = levels if levels is not None else min(paths.n_steps, 12)
    pE = float(event.mean())
    excursion = np.zeros(paths.n_paths, dtype=bool)
    for lvl in range(levels + 1):
        codes = _prefix_codes(inc, lvl)
        order = np.argsort(codes, kind="stable")
        sorted_codes = codes[order]
        boundaries = np.flatnonzero(np.diff(sorted_codes)) + 1
        seg_ids = np.zeros(paths.n_paths, dtype=np.int64)
        seg_ids[boundaries] = 1
        seg_ids = np.cumsum(seg_ids)
        sums = np.bincount(seg_ids, weights=event[order].astype(float))
        counts = np.bincount(seg_ids)
        cond = sums / counts
        hit = cond[seg_ids] >= delta - 1e-12
        back = np.empty(paths.n_paths, dtype=bool)
        back[order] = hit
        excursion |= back
    freq = float(excursion.mean())
    bound = pE / delta
    if margin is None:
        margin = 3.0 * math.sqrt(max(bound * (1 - min(bound, 1.0)), 1e-12) / paths.n_paths)
    return {
        "ok": freq <= bound + margin,
        "excursion_freq": freq,
        "bound": bound,
        "p_event": pE,
        "delta": delta,
        "levels": levels,
        "margin": margin,
    }


def mc_verify_alt(paths: MartingalePaths, k_max: int = 3) -> dict:
    """Empirical E[1_E M_N^{2k}] against alt_moment_bound for k <= k_max,
    with a 3-standard-error margin; also checks the unrestricted bound."""
    paths.validate()
    if paths.c_n.max() > 1.0 + 1e-12:
        raise DataError("the moment alternative needs |increments| <= 1 on E")
    N = paths.n_steps
    T = paths.T_bound
    on = paths.event_mask
    pE = float(on.mean())
    pEc = 1.0 - pE
    M_N = paths.values[:, -1]
    out = []
    for k in range(1, k_max + 1):
        samples = np.where(on, M_N ** (2 * k), 0.0)
        emp = float(samples.mean())
        se = float(samples.std(ddof=1)) / math.sqrt(paths.n_paths)
        bound = alt_moment_bound(k, N, T, pE, pEc)
        samples_u = M_N ** (2 * k)
        emp_u = float(samples_u.mean())
        se_u = float(samples_u.std(ddof=1)) / math.sqrt(paths.n_paths)
        bound_u = alt_moment_bound_unrestricted(k, N, T, pE, pEc)
        out.append(
            {
                "k": k,
                "empirical": emp,
                "stderr": se,
                "bound": bound,
                "ok": emp - 3.0 * se <= bound,
                "empirical_unrestricted": emp_u,
                "bound_unrestricted": bound_u,
                "ok_unrestricted": emp_u - 3.0 * se_u <= bound_u,
            }
        )
    return {
        "ok": all(r["ok"] and r["ok_unrestricted"] for r in out),
        "per_k": out,
        "n_paths": paths.n_paths,
        "N": N,
        "T": T,
        "pE": pE,
    }
