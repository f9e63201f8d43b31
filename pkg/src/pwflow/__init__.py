"""Pseudospectral parametric Willmore flow on flat tori."""

from .dbar import NonSolvable, TangentField01, dbar_solve, l1_norm_pair, potential_of
from .diagnostics import (
    DiagnosticsRecord,
    GreenField,
    NoAdmissibleR,
    alpha_rate_residual,
    existence_time_report,
    green_function,
    green_l1_report,
    record,
)
from .flow import (
    FlowConfig,
    FlowState,
    ReprojectionFailed,
    RunResult,
    RunStatus,
    StepRejected,
    Velocity,
    assemble_velocity,
    reproject_conformal,
    run,
    step,
)
from .geometry import (
    DegenerateImmersion,
    GeometryBundle,
    ImmersionField,
    compute_geometry,
    energy_identities,
    willmore_energy,
)
from .grid import FlatModulus, Grid, NonZeroMean, spectral_derivative
from .moduli import (
    ConcentrationMap,
    QuadDifferential,
    SingularModulus,
    concentration,
    geodesic_distance,
    modulus_velocity,
    project_quadratic,
    reduce_modulus,
    systole,
)
from .willmore import WillmoreGradient, codazzi_residual, willmore_gradient

__version__ = "0.1.0"

__all__ = [
    "ConcentrationMap",
    "DegenerateImmersion",
    "DiagnosticsRecord",
    "FlatModulus",
    "FlowConfig",
    "FlowState",
    "GeometryBundle",
    "GreenField",
    "Grid",
    "ImmersionField",
    "NoAdmissibleR",
    "NonSolvable",
    "NonZeroMean",
    "QuadDifferential",
    "ReprojectionFailed",
    "RunResult",
    "RunStatus",
    "SingularModulus",
    "StepRejected",
    "TangentField01",
    "Velocity",
    "WillmoreGradient",
    "alpha_rate_residual",
    "assemble_velocity",
    "codazzi_residual",
    "compute_geometry",
    "concentration",
    "dbar_solve",
    "energy_identities",
    "existence_time_report",
    "geodesic_distance",
    "green_function",
    "green_l1_report",
    "l1_norm_pair",
    "modulus_velocity",
    "potential_of",
    "project_quadratic",
    "record",
    "reduce_modulus",
    "reproject_conformal",
    "run",
    "spectral_derivative",
    "step",
    "systole",
    "willmore_energy",
    "willmore_gradient",
]
