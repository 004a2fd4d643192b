"""Extinction-path analysis for branching processes.

Discrete side: offspring-law calculus, the Fenchel-Legendre per-step cost,
closed-form most likely extinction paths, and a grid DP oracle. Continuous
side: the square-root diffusion's optimal path, a variational oracle, and an
exact-exponent ODE oracle, adjudicating the published constant. Monte Carlo
simulation with reproducible counter-based streams ties both to sampled data.
"""
from ._backend import available_backends, default_backend, get_lane
from .feller_path import (
    ContinuousPathGrid,
    ExponentReport,
    FellerModel,
    closed_form_exponent,
    extinction_exponent_report,
    most_likely_grid,
    most_likely_path_cont,
    printed_exponent,
    rate_quadrature,
    riccati_exponent_oracle,
    variational_oracle,
)
from .gw_path import (
    DiscretePath,
    DpOracleConfig,
    dp_oracle,
    extinction_exponent_discrete,
    legendre,
    most_likely_extinction_path,
    path_rate,
)
from .mc_sim import (
    SCHEME_EULER,
    SCHEME_EXACT,
    FellerSimConfig,
    GwSimConfig,
    McExtinctionResult,
    RngStream,
    feller_extinction_mc,
    gw_extinction_mc,
    simulate_feller_path,
    simulate_gw_step,
)
from .offspring import (
    OffspringDistribution,
    PgfIterates,
    extinction_prob_exact,
    log_mgf,
    log_mgf_d1,
    log_mgf_d2,
    mean,
    pgf,
    pgf_d1,
    pgf_iterates,
)
from .reportio import (
    FELLER_KIND,
    GW_KIND,
    ExponentEntry,
    ModelSpec,
    RateReport,
    SpecError,
    build_feller_report,
    build_gw_report,
    emit_csv,
    parse_csv,
    parse_model_spec,
    report_to_json,
    validate_report,
)

__version__ = "0.1.0"

__all__ = [
    "ContinuousPathGrid",
    "DiscretePath",
    "DpOracleConfig",
    "ExponentEntry",
    "ExponentReport",
    "FELLER_KIND",
    "FellerModel",
    "FellerSimConfig",
    "GW_KIND",
    "GwSimConfig",
    "McExtinctionResult",
    "ModelSpec",
    "OffspringDistribution",
    "PgfIterates",
    "RateReport",
    "RngStream",
    "SCHEME_EULER",
    "SCHEME_EXACT",
    "SpecError",
    "available_backends",
    "build_feller_report",
    "build_gw_report",
    "closed_form_exponent",
    "default_backend",
    "dp_oracle",
    "emit_csv",
    "extinction_exponent_discrete",
    "extinction_exponent_report",
    "extinction_prob_exact",
    "feller_extinction_mc",
    "get_lane",
    "gw_extinction_mc",
    "legendre",
    "log_mgf",
    "log_mgf_d1",
    "log_mgf_d2",
    "mean",
    "most_likely_extinction_path",
    "most_likely_grid",
    "most_likely_path_cont",
    "parse_csv",
    "parse_model_spec",
    "path_rate",
    "pgf",
    "pgf_d1",
    "pgf_iterates",
    "printed_exponent",
    "rate_quadrature",
    "report_to_json",
    "riccati_exponent_oracle",
    "simulate_feller_path",
    "simulate_gw_step",
    "validate_report",
    "variational_oracle",
]
