import math

import numpy as np
import pytest
from scipy import stats as sps

from curvelab.field import (
    CoefficientField,
    FieldSpec,
    ParameterError,
    RectRegion,
    cone_profile,
    eval_obstacle,
    plateau_profile,
    restrict,
    sample_poisson,
    shift_forcing,
    table_profile,
)
from curvelab.grid import Grid2D


DOMAIN = (0.0, 20.0, 0.0, 20.0)


def test_zero_intensity_gives_empty_cloud():
    pts = sample_poisson(DOMAIN, 0.0, 1.0, seed=123)
    assert pts.count() == 0


def test_sampling_is_deterministic_per_seed():
    a = sample_poisson(DOMAIN, 0.05, 1.0, seed=42)
    b = sample_poisson(DOMAIN, 0.05, 1.0, seed=42)
    assert np.array_equal(a.points, b.points)
    c = sample_poisson(DOMAIN, 0.05, 1.0, seed=43)
    assert not np.array_equal(a.points, c.points)


def test_negative_intensity_rejected():
    with pytest.raises(ParameterError):
        sample_poisson(DOMAIN, -0.1)


def test_count_matches_poisson_mean():
    # domain [0,100]^2 padded by 1: expected count 0.02 * 102^2 = 208.08
    domain = (0.0, 100.0, 0.0, 100.0)
    expected = 0.02 * 102.0**2
    n = 10_000
    counts = np.fromiter(
        (sample_poisson(domain, 0.02, 1.0, seed=s).count() for s in range(n)),
        dtype=float,
        count=n,
    )
    se = counts.std(ddof=1) / math.sqrt(n)
    assert abs(counts.mean() - expected) <= 3.0 * se


def test_points_lie_in_padded_domain():
    pts = sample_poisson(DOMAIN, 0.1, 2.0, seed=7)
    x, y = pts.points[:, 0], pts.points[:, 1]
    assert (x >= -2.0).all() and (x <= 22.0).all()
    assert (y >= -2.0).all() and (y <= 22.0).all()


class TestEvalObstacle:
    def test_far_from_everything_is_zero(self):
        pts = sample_poisson(DOMAIN, 0.0, 1.0, seed=0)
        assert eval_obstacle(cone_profile(1.0), pts, 10.0, 10.0) == 0.0

    def test_at_a_point_center_gives_peak(self):
        pts = sample_poisson(DOMAIN, 0.0, 1.0, seed=0)
        pts = type(pts)(np.array([[5.0, 5.0]]), 0.0, DOMAIN, 1.0, 0)
        assert eval_obstacle(cone_profile(1.7), pts, 5.0, 5.0) == pytest.approx(1.7)

    def test_overlapping_obstacles_take_the_max(self):
        pts = sample_poisson(DOMAIN, 0.0, 1.0, seed=0)
        pts = type(pts)(np.array([[5.2, 5.0], [5.6, 5.0]]), 0.0, DOMAIN, 1.0, 0)
        # phi(s) = 1 - s at distances 0.2 and 0.6: max(0.8, 0.4) = 0.8
        val = eval_obstacle(cone_profile(1.0), pts, 5.0, 5.0)
        assert val == pytest.approx(0.8)


class TestForcing:
    def test_obstacle_free_point(self):
        f = CoefficientField(a=1.0, f_uni=1.0)
        assert f.eval_forcing(3.0, 4.0) == pytest.approx(1.0)

    def test_restricted_far_tail(self):
        base = CoefficientField(a=1.0, f_uni=1.0, c1a=1.0, c1f=2.0)
        f = restrict(base, RectRegion(0.0, 4.0, 0.0, 4.0))
        # dist >= 1/3 from Q: the constant floor -max(c1f, 6 c1a)
        assert f.eval_forcing(4.0 + 0.5, 2.0) == pytest.approx(-6.0)

    def test_restricted_blend_value(self):
        base = CoefficientField(a=1.0, f_uni=1.0, c1a=1.0, c1f=2.0)
        f = restrict(base, RectRegion(0.0, 4.0, 0.0, 4.0))
        # dist = 1/6: 3(1/3 - 1/6)*1 - 3*(1/6)*6 = -2.5
        assert f.eval_forcing(4.0 + 1.0 / 6.0, 2.0) == pytest.approx(-2.5)

    def test_amplitude_taper(self):
        base = CoefficientField(a=1.0, f_uni=1.0)
        f = restrict(base, RectRegion(0.0, 4.0, 0.0, 4.0))
        assert f.amplitude_factor(4.0 + 2.0 / 3.0, 2.0) == pytest.approx(1.0)
        assert f.amplitude_factor(4.0 + 5.0 / 6.0, 2.0) == pytest.approx(0.5)
        assert f.amplitude_factor(4.0 + 1.0, 2.0) == pytest.approx(0.0)
        assert f.amplitude_factor(4.0 + 3.0, 2.0) == pytest.approx(0.0)

    def test_restriction_leaves_original_untouched(self):
        base = CoefficientField(a=1.0, f_uni=1.0)
        restrict(base, RectRegion(0.0, 4.0, 0.0, 4.0))
        assert base.restriction is None

    def test_empty_region_rejected(self):
        base = CoefficientField(a=1.0, f_uni=1.0)
        with pytest.raises(ParameterError):
            restrict(base, RectRegion(4.0, 0.0, 0.0, 4.0))

    def test_restriction_idempotent_on_q(self):
        spec = FieldSpec(a=1.0, f_uni=1.0, intensity=0.05, peak=1.5)
        base = spec.realize(DOMAIN, seed=11)
        q = RectRegion(4.0, 16.0, 4.0, 16.0)
        f = restrict(base, q)
        grid = Grid2D(41, 41, 0.3, (4.0, 4.0))
        X, Y = grid.meshgrid()
        inside = q.dist(X, Y) <= 0.0
        Fq = f.forcing_grid(grid)
        F0 = base.forcing_grid(grid)
        assert np.array_equal(Fq[inside], F0[inside])


class TestShift:
    def test_zero_shift_identity(self):
        f = CoefficientField(a=1.0, f_uni=1.0)
        g = shift_forcing(f, 0.0)
        assert g.eval_forcing(1.0, 1.0) == f.eval_forcing(1.0, 1.0)

    def test_additive(self):
        f = CoefficientField(a=1.0, f_uni=1.0)
        assert shift_forcing(f, 0.25).eval_forcing(2.0, 2.0) == pytest.approx(1.25)

    def test_composition(self):
        f = CoefficientField(a=1.0, f_uni=1.0)
        g = shift_forcing(shift_forcing(f, 0.1), 0.2)
        h = shift_forcing(f, 0.3)
        assert g.eval_forcing(2.0, 2.0) == pytest.approx(h.eval_forcing(2.0, 2.0))

    def test_shift_applies_before_blend_inside_q(self):
        base = CoefficientField(a=1.0, f_uni=1.0, c1a=1.0, c1f=2.0)
        f = shift_forcing(restrict(base, RectRegion(0.0, 4.0, 0.0, 4.0)), 0.5)
        assert f.eval_forcing(2.0, 2.0) == pytest.approx(1.5)
        # constant tail outside stays pinned at the floor
        assert f.eval_forcing(6.0, 2.0) == pytest.approx(-6.0)


def test_profiles():
    cone = cone_profile(2.0)
    assert cone(0.0) == pytest.approx(2.0)
    assert cone(0.5) == pytest.approx(1.0)
    assert cone(1.0) == 0.0
    assert cone(1.5) == 0.0
    plat = plateau_profile(1.0)
    assert plat(0.25) == pytest.approx(1.0)
    assert plat(0.75) == pytest.approx(0.5)
    assert plat(1.2) == 0.0
    tab = table_profile([0.0, 0.5, 1.0], [1.0, 1.0, 0.0])
    assert tab(0.25) == pytest.approx(1.0)
    assert tab(0.75) == pytest.approx(0.5)


def test_lipschitz_audit():
    spec = FieldSpec(a=1.0, f_uni=1.0, intensity=0.08, peak=2.0, profile="cone")
    field = spec.realize(DOMAIN, seed=3)
    grid = Grid2D(161, 161, 0.125, (0.0, 0.0))
    F = field.forcing_grid(grid)
    gx = np.abs(np.diff(F, axis=1)) / grid.dx
    gy = np.abs(np.diff(F, axis=0)) / grid.dx
    lip = field.shape.lipschitz
    assert max(gx.max(), gy.max()) <= lip + 0.05 * lip


def test_stationarity_under_translation():
    """Re-sampling with a shifted domain and the same intensity gives a
    translation-consistent forcing distribution (two-sample KS)."""
    spec = FieldSpec(a=1.0, f_uni=1.0, intensity=0.06, peak=1.0)
    rng = np.random.default_rng(0)
    probe = Grid2D(33, 33, 0.4, (4.0, 4.0))
    base = spec.realize(DOMAIN, seed=100)
    ref = base.forcing_grid(probe).ravel()
    worst = 0.0
    for k in range(50):
        tau = rng.uniform(-2.0, 2.0, size=2)
        shifted_domain = (
            DOMAIN[0] + tau[0], DOMAIN[1] + tau[0],
            DOMAIN[2] + tau[1], DOMAIN[3] + tau[1],
        )
        f2 = spec.realize(shifted_domain, seed=200 + k)
        probe2 = Grid2D(33, 33, 0.4, (4.0 + tau[0], 4.0 + tau[1]))
        sample = f2.forcing_grid(probe2).ravel()
        worst = max(worst, sps.ks_2samp(ref, sample).statistic)
    assert worst <= 0.2
