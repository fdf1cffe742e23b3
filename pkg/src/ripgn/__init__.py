"""Relaxed inexact proximal Gauss-Newton optimization with a 2D EIT
reconstruction pipeline.

Layers, bottom to top: disc meshes and P1 geometry (mesh), the complete
electrode model with its adjoint Jacobian (forward), regularizers and
proximal mappings (regularizers, prox), the two-block primal-dual inner
solver (pdps), regularization schemes (schemes), the relaxed
Gauss-Newton outer loop plus baselines (solver), and the experiment
harness with its CLI (harness, cli).
"""

from .errors import (
    ConfigurationError,
    DivergenceError,
    DomainError,
    GeometryError,
    RipgnError,
    SolveError,
)
from .forward import (
    AssembledSystem,
    CEMModel,
    ForwardSolution,
    LinearizedMisfit,
    assemble_system,
    forward_solve,
    jacobian,
    misfit,
)
from .harness import (
    Dataset,
    Phantom,
    homogeneous_fit,
    make_phantom,
    relative_error,
    run_case,
    run_sweep,
    simulate_measurements,
)
from .mesh import (
    ElementGeometry,
    Mesh2D,
    build_disc_mesh,
    element_geometry,
    read_mesh,
    write_mesh,
)
from .pdps import (
    LinearBlock,
    PdpsStepParams,
    TwoBlockProblem,
    nlpdps_solve,
    operator_norm,
    pdps_solve,
    step_lengths,
)
from .prox import (
    ProxGParams,
    dual_ball_projection,
    prox_barrier_box_quadratic,
    prox_box_quadratic,
    prox_conj_quadratic_fit,
)
from .regularizers import (
    Barrier,
    BoxSet,
    SmoothnessPrior,
    TvOperator,
    barrier_value,
    build_smoothness_prior,
    build_tv_operator,
    smoothed_tv,
    tv_value,
)
from .schemes import SmoothedTvScheme, SmoothScheme, TvScheme
from .solver import (
    ConvergenceBoundInputs,
    ConvergenceTrace,
    GaussNewtonProblem,
    NewtonObjective,
    RipgnConfig,
    RipgnResult,
    estimate_w_bound,
    linearize_subproblem,
    newton_baseline,
    relaxation_linesearch,
    residual_stop,
    ripgn_solve,
    stagnation_stop,
)

__version__ = "0.1.0"
