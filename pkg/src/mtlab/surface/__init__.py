"""Discrete closed surfaces: spectral conformal torus and cotangent icosphere."""
from .chart import (
    LocalJet,
    NormalChart,
    chart_limit,
    distances_from,
    local_jet,
    normal_chart,
    polar_coordinates,
)
from .io import field_from_dict, field_to_dict, mesh_from_dict, mesh_to_dict
from .mesh import (
    Backend,
    ScalarField,
    SurfaceMesh,
    build_icosphere,
    build_torus,
    euler_characteristic,
    is_closed_manifold,
)
from .operators import (
    apply_laplacian,
    dirichlet_energy,
    gaussian_curvature,
    gradient_lq_norm,
    gradient_magnitude,
    integrate,
    lp_norm,
    solve_poisson,
    solve_shifted,
    weight_integral,
)

__all__ = [
    "Backend", "LocalJet", "NormalChart", "ScalarField", "SurfaceMesh",
    "apply_laplacian", "build_icosphere", "build_torus", "chart_limit",
    "dirichlet_energy", "distances_from", "euler_characteristic",
    "field_from_dict", "field_to_dict", "gaussian_curvature", "gradient_lq_norm",
    "gradient_magnitude", "integrate", "is_closed_manifold", "local_jet",
    "lp_norm", "mesh_from_dict", "mesh_to_dict", "normal_chart",
    "polar_coordinates", "solve_poisson", "solve_shifted", "weight_integral",
]
