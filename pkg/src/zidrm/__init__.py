"""Semiparametric two-sample inference for zero-inflated data under a
density ratio model, fitted by maximum empirical likelihood."""

from .core import (BasisFunction, BoundaryNu, DimensionMismatch, DomainError,
                   EmptySample, NoPositives, ParamBundle, TwoSampleData, ZidrmError,
                   load_two_sample, make_basis)
from .solver import (DrmFit, NonConvergence, SeparationSuspected, SolverOptions,
                     fit)
from .functionals import (SmoothMap, UFunctional, builtin_g, builtin_u, estimate,
                          linear_functional_u, log_of, make_smooth_map,
                          make_ufunctional, psi_hat)
from .asymptotics import (covariance_report, gamma_g_hat, gamma_hat,
                          gamma_non_and_sem, lambda_hat)
from .inference import (IntervalResult, TestResult, bootstrap_wald, drm_estimates,
                        nonparam_estimates, nonparam_log_ratio_interval,
                        wald_interval, wald_region_test)
from .simulation import (PRESETS, McReport, MixtureScenario, generate,
                         get_scenario, run_study)

__version__ = "0.1.0"
