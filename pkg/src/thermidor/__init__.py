"""P1 finite elements for a mollified thermo-diffusion system with truncated
Smoluchowski coagulation and colloid deposition."""

from .errors import (AccuracyError, ConfigError, DivergenceError,
                     InvalidArgumentError, SolverError, StabilityError,
                     ThermidorError)
from .fem import (DEGREE4, FeSpace, QuadRule, assemble_convection,
                  assemble_load, assemble_mass, assemble_stiffness,
                  error_norms, interpolate, make_space)
from .io import (RunConfig, format_config, parse_config, read_eoc_csv,
                 write_eoc_csv, write_fields_vtk)
from .linalg import solve_linear
from .mesh import (UNIT_SQUARE, Mesh, Rectangle, build_spatial_index,
                   build_structured_mesh, refine_uniform, triangles_near)
from .mollifier import (MollifiedGradientOperator, MollifierKernel,
                        make_kernel, mollified_gradient_analytic,
                        mollified_gradient_discrete)
from .physics import (InitialData, ModelParams, deposition_closed_form,
                      deposition_step_eliminate, lipschitz_bound_check,
                      smoluchowski_rates)
from .scheme import (Discretization, State, StepReport, advance_step,
                     integrate_mol_rk4, mol_rhs, run_simulation)
from .verification import (EocTable, StudyProtocol, convergence_study,
                           coupled_mms_case, exact_decoupled_case,
                           mms_residuals, ritz_project)

__version__ = "0.1.0"
