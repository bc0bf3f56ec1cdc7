"""Self-similar profiles of the coagulation equation with product kernels."""

__version__ = "0.1.0"

from .dynamics import (
    ScaleState,
    SizeDistribution,
    constant_kernel,
    evolve_scale,
    geometric_edges,
    rescaled_compare,
    simulate,
)
from .errors import (
    CoagError,
    ConfigError,
    DomainError,
    KernelSpecError,
    NumericalFailure,
    QuadratureError,
    TrivialFixedPointError,
    WeightOverflowError,
)
from .kernel import HLambda, KernelSpec, compute_h_lambda, kernel_eval, product_kernel, validate_kernel
from .operator import QuadratureConfig, apply_T, apply_T_values, flux, flux_values
from .profile import (
    ConstantTail,
    ExponentialTail,
    LogGrid,
    Profile,
    ZeroTail,
    g_to_f,
    g_to_h,
    h_to_g,
    make_profile,
)
from .solver import SolverConfig, SolveReport, default_initial_profile, rescale_solution, solve_profile
from .verify import VerificationReport, VerifyConfig, verify_profile
