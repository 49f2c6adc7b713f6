"""Unfitted finite elements for one-dimensional nonlocal interface problems."""

__version__ = "0.1.0"

from .kernels import KernelError, KernelSpec, make_kernel, verify_horizon_bound  # noqa: E402
from .geometry import GeometryError, build_dof_map, build_mesh, build_regions  # noqa: E402
from .operators import EXAMPLES, ProblemData, flux_functional, get_example, local_flux_jump, manufacture_data  # noqa: E402
from .assembly import QuadSettings, assemble_system, solve_problem  # noqa: E402
from .norms import ErrorRecord, energy_error, error_record, l2_error, max_error  # noqa: E402
from .studies import StudyConfig, StudyReport, run_study, table_config  # noqa: E402

__all__ = [
    "__version__", "KernelError", "KernelSpec", "make_kernel", "verify_horizon_bound",
    "GeometryError", "build_dof_map", "build_mesh", "build_regions",
    "EXAMPLES", "ProblemData", "flux_functional", "get_example", "local_flux_jump", "manufacture_data",
    "QuadSettings", "assemble_system", "solve_problem",
    "ErrorRecord", "energy_error", "error_record", "l2_error", "max_error",
    "StudyConfig", "StudyReport", "run_study", "table_config",
]
