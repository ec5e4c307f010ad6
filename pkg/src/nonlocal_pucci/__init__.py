"""Nonlocal extremal operators on grids: kernels, quadrature, barriers, ABP machinery,
a monotone solver and empirical regularity measurements."""

from .errors import (CertificationError, DegenerateFitError, DomainError, IllConditionedError, NonlocalError,
                     QuadratureError, ResolutionError, SolverDivergence)
from .grid import AffineExterior, ConstantExterior, GridFunction, StepExterior
from .kernels import (KernelSpec, classify_eta_family, classify_eta_single, cosine_kernel, drift_vector,
                      mixture_kernel, radial_kernel, split_kernel)
from .operators import OperatorSpec, evaluate, evaluate_linear, extremal, extremal_eta
from .quadrature import QuadratureSpec
from .barriers import build_psi, certify_subsolution, find_parameters, make_exp_barrier, make_power_barrier
from .abp import abp_sup_bound_check, concave_envelope, contact_set, cube_decomposition, gradient_image_volume
from .solver import ProblemSpec, residual, solve
from .regularity import c1alpha_probe, harnack_ratio, holder_seminorm, level_decay

__version__ = "0.1.0"
