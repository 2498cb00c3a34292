"""Monte Carlo solver and verifier for transposition solutions of BSDEs.

The equation is ``dy = f(t, y, Y) dt + Y dw``, ``y(T) = y_T``, on a
filtration that may be larger than the one generated by ``w``.
"""

from .cache import cache_load, cache_save
from .condexp import RegressionSpec, condexp_process, condexp_slice, martingale_residual
from .config import RunConfig, load_config
from .core import (
    AdaptedProcess, FiltrationModel, InformationState, PathEnsemble, TimeGrid, build_uniform_grid,
    ito_integral, ito_process, l2_l1_norm, l2_l2_norm, mean_and_se, rms, simulate_ensemble,
    sup_l2_norm, time_integral, time_integral_process,
)
from .errors import (
    AdaptednessError, BSDELabError, CacheFormatError, ConditioningError, ConfigurationError,
    ConvergenceError, DimensionError, DriverSpecError, RegistryError, SetupError,
)
from .forward import RatioReport, TestProcessInput, simulate_test_process, test_process_bound_ratio
from .linear import (
    GalerkinBasis, LinearBSDEProblem, TranspositionSolution, apriori_ratio, assemble_gram,
    assemble_rhs, build_tensor_basis, corrected_form_residual, solve_linear, solve_Y_galerkin,
    solve_y_regression, uniform_cells,
)
from .picard import (
    DRIVERS, DriverSpec, PicardConfig, make_driver, picard_window, plan_knot_windows,
    plan_windows, solve_semilinear, window_length,
)
from .problems import TERMINALS, make_terminal
from .report import RunReport, export_csv, run_config, solve_config
from .verification import (
    DualityTest, VerificationReport, comparison_check, duality_residual, make_oracle,
    orthogonal_decomposition_check, pseudo_duality_residual, random_test_suite,
    refinement_study, time_consistency_check,
)

__version__ = "0.1.0"
