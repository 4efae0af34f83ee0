"""Linear response of Markov jump processes on finite state spaces.

Path simulation and Girsanov reweighting, Monte-Carlo and deterministic
response formulas, oscillatory steady states under periodic driving, the
complex mobility of torus walks, and diagnostic checkers for exponential
moment conditions.
"""
from .core import (PerturbedKernel, RateMatrix, StateSpace, StationaryChain, contract, inner, psi,
                   psi_field, reverse, stationary)
from .errors import (ConfigError, CrossCheckFailure, HeavyTailWarning, JumpResponseError,
                     NonPositiveRate, NotIrreducible, SolverFailure, StepperFailure,
                     TruncatedPath, TruncatedPathsExceeded, WeightDegeneracy)
from .fields import Field, Perturbation
from .mobility import (MobilityMatrix, TorusModel, build_torus, mobility,
                       mobility_closed_form_two_periodic, mobility_quadrature,
                       mobility_reversible, two_periodic_torus, velocity_response)
from .models import (BirthDeathModel, ConfiningPotentialModel, LyapunovCertificate,
                     bd_check_conditions, bd_stationary, confining_check, exp_moment_mc,
                     lyapunov_check)
from .oss import (PeriodicDriving, fourier_response, monodromy, oss_derivative,
                  oss_distribution, oss_lr_jump, oss_lr_observable, oss_lr_time_integral)
from .paths import (Ensemble, JumpSum, RngStream, TerminalObservable, TimeIntegral, Trajectory,
                    eval_action, eval_exp_martingale, eval_functional, eval_G,
                    simulate_ensemble, simulate_homogeneous, simulate_inhomogeneous)
from .profiles import Constant, Cosine, Fourier, Polynomial
from .response_exact import (kolmogorov_forward, lr_jump_stationary, lr_observable_stationary,
                             lr_time_integral_stationary, response_sensitivity)
from .response_mc import (ResponseEstimate, direct_fd, fd_derivative, girsanov_expectation,
                          lr_covariance, lr_res3)

__version__ = "0.1.0"
