"""Tamed and semi-tamed Euler schemes for jump-diffusion SDEs, their
mean-square stability thresholds, and a reproducible Monte Carlo harness."""

from .core import (
    Increment,
    JumpDiffusionProblem,
    LinearTestParams,
    NoiseStream,
    brownian_increment,
    compensate,
    derive_path_stream,
    increment_table,
    next_increment,
    poisson_increment,
)
from .montecarlo import (
    AllPathsOverflowed,
    DecayFit,
    InsufficientData,
    MomentSeries,
    estimate_second_moments,
    fit_decay_rate,
)
from .problems import BUILTINS, LINEAR_PARAMS, NONLINEAR_CONSTANTS, linear_test_problem
from .schemes import (
    NonConvergence,
    Scheme,
    Trajectory,
    simulate_path,
    step_be,
    step_em,
    step_ncts,
    step_ssbe,
    step_sts,
)
from .stability import (
    ExactSolutionConstants,
    HypothesisFailed,
    NonlinearConstants,
    StabilityVerdict,
    exact_linear_stable,
    exact_nonlinear_alpha,
    exponential_bound,
    linear_indicator,
    ncts_linear_verdict,
    ncts_nonlinear_threshold,
    sts_linear_amplification,
    sts_linear_threshold,
    sts_nonlinear_threshold,
)

__version__ = "0.1.0"
