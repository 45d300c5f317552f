"""Robust-optimisation bounds for tandem and multiclass single-server queues."""

from .envelope_math import (
    E_2E,
    E_E,
    UShape,
    bracket_xstar,
    negativity_threshold,
    phi,
    stationary_point,
    u_numeric_max,
    u_value,
    umax_bound,
)
from .errors import *  # noqa: F401,F403
from .lil import BudgetSet, certify_forward, certify_tail, effective_gamma
from .multiclass import (
    McssInstance,
    arrival_count_bound,
    busy_period_bounds,
    stationary_estimators,
    traffic_solve,
    workload_trace,
)
from .paths import BusyPeriodLog, McssPath, TscPath, WorkloadTrace
from .simkit import DistSpec, draw_path_mcss, draw_path_tsc, ergodic_estimates
from .tandem import (
    Envelope,
    TscInstance,
    chain_max_sojourn,
    envelope_bound,
    lindley_sojourn,
    sojourn_bound,
)

__version__ = "0.1.0"
