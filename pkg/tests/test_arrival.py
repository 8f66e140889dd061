import math

import numpy as np
import pytest

from conftest import ode_time_to_radius, square_grid
from curvelab.arrival import (
    ArrivalRecord,
    arrival_time,
    cap_time,
    hom_arrival,
    max_speed,
    truncated_arrival,
)
from curvelab.field import CoefficientField, FieldSpec, PoissonPoints, cone_profile
from curvelab.grid import GridSet
from curvelab.levelset import SolverParams


class TestCapTime:
    def test_direct_value(self):
        assert cap_time(1.0, None, 10.0, v_min=0.5, c_s=2.0) == pytest.approx(22.0)

    def test_zero_distance(self):
        assert cap_time(1.5, None, 0.0, v_min=0.5, c_s=2.0) == pytest.approx(3.0)

    def test_linear_in_distance(self):
        base = cap_time(1.0, None, 10.0, v_min=0.5, c_s=2.0)
        double = cap_time(1.0, None, 20.0, v_min=0.5, c_s=2.0)
        assert double - base == pytest.approx(10.0 / 0.5)


class TestMaxSpeed:
    def test_direct_value(self):
        assert max_speed(1.0, c1a=1.0, c1f=2.0) == pytest.approx(7.0)

    def test_vanishing_curvature(self):
        assert max_speed(1.0, c1a=0.0, c1f=2.0) == pytest.approx(2.0)

    def test_large_delta_limit(self):
        assert max_speed(1e9, c1a=1.0, c1f=2.0) == pytest.approx(6.0, rel=1e-6)


class TestArrivalTime:
    def test_already_covered(self):
        grid = square_grid(65, 8.0)
        S = GridSet.disk(grid, (0, 0), 3.0)
        rec = arrival_time(CoefficientField(a=1.0, f_uni=1.0), S, (0.0, 0.0), 5.0)
        assert rec.value == 0.0 and not rec.censored

    def test_planar_transport_oracle(self):
        grid = square_grid(161, 10.0)
        S = GridSet.halfplane(grid, (0.0, 1.0), -8.0)
        field = CoefficientField(a=0.0, f_uni=1.0)
        params = SolverParams(record_dt=0.1)
        x0 = (0.0, 2.0)  # distance 10 from the front at y=-8
        rec = arrival_time(field, S, x0, 15.0, params)
        assert not rec.censored
        assert rec.value == pytest.approx(10.0, abs=0.1 + 2 * grid.dx)

    def test_impenetrable_ring_censors(self):
        grid = square_grid(129, 8.0)
        # ring of obstacle points at radius 3 around the target
        n = 40
        ang = 2 * np.pi * np.arange(n) / n
        pts_arr = np.stack([3.0 * np.cos(ang), 3.0 * np.sin(ang)], axis=1)
        pts = PoissonPoints(pts_arr, 0.0, grid.bounds(), 1.0, 0)
        # peak >= F_uni + a/rho_ring + margin: impenetrable barrier
        field = CoefficientField(a=0.5, f_uni=1.0, shape=cone_profile(3.0), points=pts)
        S = GridSet(grid, ~GridSet.disk(grid, (0, 0), 6.5).mask)
        rec = arrival_time(field, S, (0.0, 0.0), 20.0, SolverParams(record_dt=0.5))
        assert rec.censored
        assert rec.value == rec.cap


class TestTruncatedArrival:
    def test_target_already_touched(self):
        grid = square_grid(65, 8.0)
        S = GridSet.disk(grid, (0, 0), 3.0)
        rec = truncated_arrival(
            CoefficientField(a=1.0, f_uni=1.0), S, (0.0, 3.5), 1.0, v_min=0.5
        )
        assert rec.value == 0.0

    def test_value_never_exceeds_cap(self):
        grid = square_grid(97, 8.0)
        S = GridSet.disk(grid, (0, 0), 1.5)
        field = CoefficientField(a=1.0, f_uni=0.05)  # crawls; cap will bind
        rec = truncated_arrival(field, S, (0.0, 6.0), 0.8, v_min=0.5,
                                params=SolverParams(record_dt=0.5))
        assert rec.value <= rec.cap + 1e-12
        assert rec.censored

    def test_radial_ode_oracle(self):
        # disk radius 50, target ball of radius 3 at distance 30: the front
        # must reach radius 77; compare against the radial ODE transit time
        from conftest import square_grid as sg

        grid = sg(385, 84.0)
        S = GridSet.disk(grid, (0, 0), 50.0)
        field = CoefficientField(a=1.0, f_uni=1.0)
        t_oracle = ode_time_to_radius(77.0, 50.0, F=1.0, a=1.0)
        params = SolverParams(record_dt=0.25)
        rec = truncated_arrival(field, S, (0.0, 80.0), 3.0, v_min=0.5, params=params)
        assert not rec.censored
        assert rec.value == pytest.approx(t_oracle, rel=0.03)


class TestHomArrival:
    def test_direct_value(self):
        grid = square_grid(65, 8.0)
        S = GridSet.halfplane(grid, (0.0, 1.0), -6.0)
        x0 = (0.0, 4.0)
        assert hom_arrival(2.0, S, x0) == pytest.approx(5.0, abs=grid.dx)

    def test_inside_is_zero(self):
        grid = square_grid(65, 8.0)
        S = GridSet.disk(grid, (0, 0), 3.0)
        assert hom_arrival(2.0, S, (0.0, 0.0)) == 0.0

    def test_scaling_homogeneity(self):
        g1 = square_grid(65, 8.0)
        g2 = square_grid(65, 16.0)
        S1 = GridSet.disk(g1, (0, 0), 2.0)
        S2 = GridSet.disk(g2, (0, 0), 4.0)
        t1 = hom_arrival(1.0, S1, (0.0, 6.0))
        t2 = hom_arrival(1.0, S2, (0.0, 12.0))
        assert t2 == pytest.approx(2.0 * t1, abs=3 * g2.dx)


class TestRecordInvariants:
    def test_censored_must_carry_cap(self):
        with pytest.raises(ValueError):
            ArrivalRecord(3.0, True, 5.0, (0, 0), 1.0, 2.0)

    def test_value_capped(self):
        with pytest.raises(ValueError):
            ArrivalRecord(7.0, False, 5.0, (0, 0), 1.0, 2.0)


class TestMonotonicityInvariants:
    def test_cap_sanity_never_censored_obstacle_free(self):
        # with v_min <= F_uni - a/h the guaranteed bound never binds
        rng = np.random.default_rng(10)
        for trial in range(100):
            grid = square_grid(81, 8.0)
            a = rng.uniform(0.0, 0.4)
            f_uni = rng.uniform(0.8, 1.5)
            h = rng.uniform(1.0, 2.0)
            v_min = min(0.5 * f_uni, f_uni - a / h - 0.05)
            if v_min <= 0.05:
                continue
            field = CoefficientField(a=a, f_uni=f_uni)
            S = GridSet.disk(grid, (0, 0), rng.uniform(1.5, 2.5))
            x0 = (rng.uniform(-1, 1), rng.uniform(4.0, 6.0))
            rec = truncated_arrival(field, S, x0, h, v_min=v_min,
                                    params=SolverParams(record_dt=0.25))
            assert not rec.censored, f"trial {trial} censored"

    def test_monotone_in_start_set(self):
        grid = square_grid(97, 8.0)
        spec = FieldSpec(a=1.0, f_uni=1.0, intensity=0.03, peak=1.2)
        field = spec.realize(grid.bounds(), seed=4)
        params = SolverParams(record_dt=0.2).strict()
        S1 = GridSet.disk(grid, (0, 0), 1.5)
        S2 = GridSet.disk(grid, (0, 0), 2.5)
        x0 = (0.0, 6.0)
        r1 = truncated_arrival(field, S1, x0, 0.8, v_min=0.5, params=params)
        r2 = truncated_arrival(field, S2, x0, 0.8, v_min=0.5, params=params)
        assert r1.value >= r2.value

    def test_monotone_in_forcing_shift(self):
        from curvelab.field import shift_forcing
        from curvelab.levelset import cfl_dt, monotone_dt_cap
        from dataclasses import replace

        grid = square_grid(97, 8.0)
        spec = FieldSpec(a=1.0, f_uni=1.0, intensity=0.03, peak=1.2)
        base = spec.realize(grid.bounds(), seed=4)
        shifted = shift_forcing(base, 0.2)
        dt = min(cfl_dt(grid, shifted, 0.9), monotone_dt_cap(grid, shifted))
        params = replace(SolverParams(record_dt=0.2).strict(), fixed_dt=dt)
        S = GridSet.disk(grid, (0, 0), 1.5)
        x0 = (0.0, 6.0)
        r0 = truncated_arrival(base, S, x0, 0.8, v_min=0.5, params=params)
        r1 = truncated_arrival(shifted, S, x0, 0.8, v_min=0.5, params=params)
        assert r1.value <= r0.value

    def test_monotone_in_target_radius(self):
        grid = square_grid(97, 8.0)
        spec = FieldSpec(a=1.0, f_uni=1.0, intensity=0.03, peak=1.2)
        field = spec.realize(grid.bounds(), seed=6)
        params = SolverParams(record_dt=0.2)
        S = GridSet.disk(grid, (0, 0), 1.5)
        x0 = (0.0, 6.0)
        vals = [
            truncated_arrival(field, S, x0, h, v_min=0.5, params=params).value
            for h in (0.6, 1.0, 1.6)
        ]
        assert vals[0] >= vals[1] >= vals[2]


def test_csv_row_roundtrip():
    rec = ArrivalRecord(3.25, False, 10.0, (0.0, 5.0), 1.0, 4.0, seed=7)
    row = rec.to_row()
    assert row["seed"] == 7 and row["value"] == 3.25 and row["censored"] is False
