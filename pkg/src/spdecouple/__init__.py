"""Desk-scale simulator and verification suite for reflection coupling of
one-dimensional stochastic PDEs driven by space-time white noise."""

from .config import ConfigError, ExperimentConfig, initial_field, load_config, parse_config
from .coupling import (CoupledPair, CouplingOutcome, coupled_step, reflect,
                       run_coupled_ensemble, run_until_coupled)
from .drifts import Burgers, CutoffBurgers, ReactionDiffusion, Zero, drift_eval
from .grid import Field, Grid, inner, make_grid, norm, unit_mode, zero_field
from .lyapunov import (C_SOB, LyapunovTable, OutOfRangeError, QuadratureFailure,
                       RDConstants, build_f, build_f_R, cutoff_ode_constant,
                       dissipativity_constants)
from .noise import NoiseStream, sample_white_increment
from .solvers import (BlowUpError, OUSpectralSampler, SolverConfig, sample_ou_exact,
                      solve_deterministic_burgers, step_semi_implicit)
from .staged import (CalibrationReport, StagedParams, StagedTrace, calibrate,
                     kantorovich, run_staged, staged_block, wait_time)
from .stats import (DegenerateFit, InsufficientData, TauStats, clopper_pearson,
                    estimate_tau_stats, fit_decay, mean_ci, survival_curve)

__version__ = "1.0.0"
