"""Measure-valued simulation of the M/GI/inf queue with its fluid and diffusion limits."""
from .diffusion import (BasisFamily, CovarianceKernel, LimitInitial, PreconditionError, clt_variance,
                        collapsed_variance, coordinate, diffusion_congestion, diffusion_service,
                        diffusion_workload, gram_schmidt_basis, laguerre, laguerre_basis, sample_limit)
from .fluid import (FluidModel, InitialLaw, fluid_congestion, fluid_pairing, fluid_range_count,
                    fluid_service, fluid_workload)
from .functions import TestFunction, gaussian_bump, hermite_weighted, indicator, sigmoid
from .laws import (ServiceLaw, make_deterministic, make_exponential, make_mixture, make_uniform)
from .measure import PointMeasure, add_atom, integrate, performance_triple, range_count, shift
from .montecarlo import (EnsembleStats, ExperimentPlan, clt_report, exact_mm_infinity_oracle,
                         fluid_error_report, run_ensemble)
from .scaling import ScalingScheme, predicted_qv, scaled_martingale, scheme_for_paper_example, simulate_normalized
from .simulator import ProfilePath, inject_path, martingale_statistic, simulate, snapshot
from .transport import MeasurePathFn, op_G, op_H, op_N, solve_transport, transport_residual

__version__ = "0.1.0"
