"""Closed profile curves of constant mean curvature hypertori
S^{n-1} x S^{n-1} x S^1 in S^{2n}, found by shooting."""

from .curve import (
    ClosureFailure,
    CurveError,
    OrientationFailure,
    ProfileCurve,
    build_closed_profile,
    cmc_residual,
    embed,
    hausdorff_distance,
    immersion_point,
    immersion_sample,
    is_simple,
    reflect_points,
)
from .integrator import (
    ARCLENGTH_BOUND,
    ChartExit,
    IntegrationControls,
    IntegrationError,
    NoSignChange,
    Outcome,
    OutcomeKind,
    StepFailure,
    Trajectory,
    integrate,
    refine_event,
    reintegrate,
    sample,
)
from .lemmas import LEMMA_IDS, LemmaReport, run_suite
from .ode_core import (
    ChartError,
    Derivative,
    Params,
    State,
    Symmetry,
    alpha_second_derivative,
    apply_symmetry,
    in_box,
    initial_state,
    radius_bound,
    stall_margin,
    vector_field,
)
from .shooting import (
    BranchResult,
    InvalidInitial,
    NoBracket,
    ScanResult,
    ShootingError,
    StallEncountered,
    bisect_bracket,
    classify,
    epsilon_bound,
    estimate_delta,
    find_branches,
    scan,
    shoot,
)

__version__ = "0.1.0"
