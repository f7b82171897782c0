"""Randomized Euler scheme for SDEs under noisy information about the drift,
the diffusion and the driving Wiener process, with Monte Carlo tools for
strong-error studies."""

__version__ = "0.1.0"

from .core import (BlackScholesParams, RandomizedTimes, SdeProblem, TimeGrid, WienerPath,
                   builtin_problem, check_class_membership, exact_black_scholes, make_grid,
                   sample_randomized_times, sample_wiener)
from .corruption import (CoefficientNoise, DisturbedWienerPath, NoiseDraw, WienerNoise,
                         corrupt_wiener_path, draw_noise, holder_sine_wiener_noise,
                         k0_linear_wiener_noise, linear_coefficient_noise, validate_holder,
                         validate_k0)
from .harness import (ErrorTable, ExperimentConfig, RateFit, estimate_error, fit_rate,
                      run_sweep)
from .solver import (DivergedError, SolverInputs, Trajectory, coarsen_wiener,
                     randomized_euler, terminal_value)
