"""Cauchy problems for symmetric hyperbolic systems with nonlocal-in-time
potentials: iterative series construction, bound/threshold arithmetic, and
verification scenarios on periodic desk-scale grids.
"""

__version__ = "0.1.0"

from .grids import (Grid, InnerWeight, StateField, Trajectory, make_grid,
                    sample_trajectory, zero_field)
from .systems import (SystemSpec, make_system, ode_system, transport_system,
                      system_from_json, system_to_json, validate_system)
from .kernels import (BoundEstimate, TimeKernel, adjoint, estimate_bound,
                      make_convolution, make_dense, make_separable,
                      threshold_margin, weighted)
from .solver import (SolveAborted, SolveOptions, evolution_op, green_retarded,
                     solve_local)
from .dyson import (DysonResult, bound_retarded, bound_short, dyson_retarded,
                    dyson_short_range, residual)
from .diagnostics import (DiagReport, cone_violation, energy_identity,
                          exponential_bound, measure_D, order_estimate,
                          support_mask)
from .scenarios import (CounterexampleConfig, DiracConfig, MaxwellConfig,
                        counterexample_report, dirac_run,
                        extended_system_check, maxwell_run,
                        surface_layer_product)
from .cli import cli_run, load_config

__all__ = [
    "Grid", "InnerWeight", "StateField", "Trajectory", "make_grid",
    "sample_trajectory", "zero_field",
    "SystemSpec", "make_system", "ode_system", "transport_system",
    "system_from_json", "system_to_json", "validate_system",
    "BoundEstimate", "TimeKernel", "adjoint", "estimate_bound",
    "make_convolution", "make_dense", "make_separable", "threshold_margin",
    "weighted",
    "SolveAborted", "SolveOptions", "evolution_op", "green_retarded",
    "solve_local",
    "DysonResult", "bound_retarded", "bound_short", "dyson_retarded",
    "dyson_short_range", "residual",
    "DiagReport", "cone_violation", "energy_identity", "exponential_bound",
    "measure_D", "order_estimate", "support_mask",
    "CounterexampleConfig", "DiracConfig", "MaxwellConfig",
    "counterexample_report", "dirac_run", "extended_system_check",
    "maxwell_run", "surface_layer_product",
    "cli_run", "load_config",
    "__version__",
]
