"""curvelab: a 2-D numerical laboratory for forced mean curvature flow
through random obstacle fields.

Interfaces evolve by normal velocity  a * curvature + F(x)  via a monotone
level-set solver; the package measures (truncated) arrival times, estimates
homogenized front speeds, probes pinning/depinning with a box criterion,
and verifies the martingale concentration bounds its statistics rest on.
"""

__version__ = "0.1.0"

from .grid import Grid2D, GridSet
from .field import (
    CoefficientField,
    FieldSpec,
    ObstacleShape,
    PoissonPoints,
    RectRegion,
    cone_profile,
    eval_obstacle,
    plateau_profile,
    restrict,
    sample_poisson,
    shift_forcing,
    table_profile,
)
from .levelset import (
    LevelSetState,
    NumericError,
    SolverParams,
    cfl_dt,
    evolve,
    init_from_set,
    monotone_dt_cap,
    reinit,
    step,
)
from .geom import (
    StabilityReport,
    check_effective_speed,
    coarsen,
    dilate,
    erode,
    fill_small_holes,
    h_envelops,
    hausdorff_excess,
    is_h_fat,
    is_stable,
    opening,
    stabilize,
)
from .arrival import (
    ArrivalRecord,
    arrival_time,
    cap_time,
    hom_arrival,
    max_speed,
    truncated_arrival,
)
from .homog import (
    HalfSpaceDisk,
    RadiusSchedule,
    VhomEstimate,
    ball_experiment,
    estimate_vhom,
    forcing_shift_f,
    halfspace_disk,
    hole_experiment,
    influence_horizon,
    linearity_report,
    radius_schedule,
)
from .concentration import (
    MartingalePaths,
    alt_moment_bound,
    alt_moment_bound_unrestricted,
    alt_tail,
    azuma_classic_tail,
    conditional_hoeffding_check,
    gen_azuma_tail,
    indicator_maximal_check,
    mc_verify_alt,
    reflected_walk,
)
from .mcharness import (
    BoxResult,
    EnsembleConfig,
    EnsembleStats,
    box_criterion,
    fluct_report,
    run_ensemble,
    wilson_interval,
)
