"""Max-plus and dynamic-programming train dynamics on a metro loop line."""

from metrodyn.analysis import (
    ConvergenceReport,
    HeadwayReport,
    analytic_headway,
    analytic_vs_maxplus_oracle,
    classify_convergence,
    empirical_headway,
    stochasticity_check,
)
from metrodyn.control import GammaSchedule, PolicyKind, PolicyParams
from metrodyn.dynamics import (
    DepartureTrace,
    MarkovForm,
    build_update_order,
    simulate,
    simulate_recursive,
    to_markov_form,
    value_iteration_headway,
)
from metrodyn.line import (
    DerivedBounds,
    InitialMarking,
    LineConfig,
    SegmentSpec,
    derive_bounds,
    validate_conditions,
)
from metrodyn.maxplus import BOTTOM, TropicalMatrix, cycle_mean, graph_cyclicity, mp_matmul

__version__ = "0.1.0"
