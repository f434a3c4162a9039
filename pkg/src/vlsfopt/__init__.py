"""Achievability bounds and schedule search for sparse stop-feedback codes.

The package approximates the distribution of a channel's cumulative
information density with saddlepoint formulas (``saddlepoint``), checks
them against exact and Monte Carlo oracles (``oracles``), optimizes
decoding schedules under two stopping rules (``optimizer``), and validates
schedules with a protocol-level simulator (``simulator``). The ``vlsf``
command line exposes all of it.
"""

from ._types import CodeSpec, OptimizationResult, Rule, Schedule
from .channels import (
    CgfValues,
    ChannelModel,
    InfoDensityLaw,
    Lattice,
    Moments,
    cgf,
    moments,
    parse_channel_spec,
    single_letter_law,
    success_prob,
)
from .errors import (
    EmptyGrid,
    Infeasible,
    LatticePointOutOfSupport,
    OutOfConvergenceRegion,
    UnsupportedLaw,
    VlsfError,
)
from .optimizer import (
    DenseReference,
    OptimizeOptions,
    SweepRow,
    dense_reference,
    objective,
    optimize,
    solve_gamma_p1,
    solve_gamma_p2,
    sweep,
)
from .oracles import (
    McConfig,
    McResult,
    SearchGrid,
    brute_force_search,
    default_search_grid,
    eps_fb,
    eps_fb_mcrcu,
    exact_cdf_lattice,
    mc_cdf,
)
from .saddlepoint import (
    DEFAULT_EPS_S,
    Branch,
    CdfQuery,
    CdfResult,
    Overshoot,
    cdf,
    cdf_value,
    lattice_cdf_at_steps,
    mean_fallback,
)
from .simulator import (
    Outcome,
    SimResult,
    StoppingResult,
    Trial,
    simulate,
    simulate_stopping_only,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Branch",
    "CdfQuery",
    "CdfResult",
    "CgfValues",
    "ChannelModel",
    "CodeSpec",
    "DEFAULT_EPS_S",
    "DenseReference",
    "EmptyGrid",
    "Infeasible",
    "InfoDensityLaw",
    "Lattice",
    "LatticePointOutOfSupport",
    "McConfig",
    "McResult",
    "Moments",
    "OptimizationResult",
    "OptimizeOptions",
    "Outcome",
    "OutOfConvergenceRegion",
    "Overshoot",
    "Rule",
    "Schedule",
    "SearchGrid",
    "SimResult",
    "StoppingResult",
    "SweepRow",
    "Trial",
    "UnsupportedLaw",
    "VlsfError",
    "brute_force_search",
    "cdf",
    "cdf_value",
    "cgf",
    "default_search_grid",
    "dense_reference",
    "eps_fb",
    "eps_fb_mcrcu",
    "exact_cdf_lattice",
    "lattice_cdf_at_steps",
    "mc_cdf",
    "mean_fallback",
    "moments",
    "objective",
    "optimize",
    "parse_channel_spec",
    "simulate",
    "simulate_stopping_only",
    "single_letter_law",
    "solve_gamma_p1",
    "solve_gamma_p2",
    "success_prob",
    "sweep",
]
