"""Numerical laboratory for geodesic ray transforms of tensor fields on disk metrics."""

__version__ = "0.1.0"

from .config import TOLERANCES, ConfigError, ExperimentConfig, load_config
from .geometry import (
    ConformalMetric,
    GeodesicPath,
    InvalidParams,
    MetricParams,
    OutOfDomain,
    PhasePoint,
    SimplicityReport,
    TrappedRay,
    check_simplicity,
    exit_time,
    make_metric,
    trace_geodesic,
)
from .grid import DiskGrid
from .reconstruct import (
    ReconstructionReport,
    construct_first_integral,
    normal_operator,
    reconstruct_from_data,
    solve_normal,
    transport_leakage,
    verify_first_integral,
)
from .smfield import (
    HarmonicComponent,
    SMField,
    apply_V,
    apply_X,
    apply_Xperp,
    apply_Xpm,
    apply_eta,
    fiber_degree_energy,
    fiber_fourier,
    field_from_function,
    harmonic_project,
    inner_product_SM,
    norm_SM,
    santalo_check,
)
from .tensors import (
    AnnulusExtension,
    IncompatibleFlux,
    PotentialPair,
    SolverDivergence,
    SymTensorField,
    L_m,
    divergence,
    ell_m,
    inner_product_M,
    norm_M,
    solenoidal_decompose,
    solenoidal_extension_m1,
    sym_derivative,
    tensor_from_functions,
    weak_divergence_residual,
)
from .transform import (
    FanBeamData,
    adjoint_Im_star,
    backproject_Istar,
    forward_I,
    forward_Im,
    inner_product_mu,
    norm_mu,
    ray_lengths,
)

__all__ = [
    "AnnulusExtension",
    "ConfigError",
    "ConformalMetric",
    "DiskGrid",
    "ExperimentConfig",
    "FanBeamData",
    "GeodesicPath",
    "HarmonicComponent",
    "IncompatibleFlux",
    "InvalidParams",
    "L_m",
    "MetricParams",
    "OutOfDomain",
    "PhasePoint",
    "PotentialPair",
    "ReconstructionReport",
    "SMField",
    "SimplicityReport",
    "SolverDivergence",
    "SymTensorField",
    "TOLERANCES",
    "TrappedRay",
    "adjoint_Im_star",
    "apply_V",
    "apply_X",
    "apply_Xperp",
    "apply_Xpm",
    "apply_eta",
    "backproject_Istar",
    "check_simplicity",
    "construct_first_integral",
    "divergence",
    "ell_m",
    "exit_time",
    "fiber_degree_energy",
    "fiber_fourier",
    "field_from_function",
    "forward_I",
    "forward_Im",
    "harmonic_project",
    "inner_product_M",
    "inner_product_SM",
    "inner_product_mu",
    "load_config",
    "make_metric",
    "norm_M",
    "norm_SM",
    "norm_mu",
    "normal_operator",
    "ray_lengths",
    "reconstruct_from_data",
    "santalo_check",
    "solenoidal_decompose",
    "solenoidal_extension_m1",
    "solve_normal",
    "sym_derivative",
    "tensor_from_functions",
    "trace_geodesic",
    "transport_leakage",
    "verify_first_integral",
]
