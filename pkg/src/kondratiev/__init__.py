"""Weighted-norm analysis of Coulomb-type Schroedinger operators on graded meshes."""
from kondratiev.geometry import AffineSubspace, MultiElectronSpec, SingularFamily, closure, multi_electron_family
from kondratiev.mesh import build_radial_mesh, build_tensor_mesh
from kondratiev.studies import convergence_study, decay_fit, solve_3d, solve_magnetic, solve_radial
from kondratiev.weights import WeightEvaluator

__all__ = [
    "AffineSubspace",
    "MultiElectronSpec",
    "SingularFamily",
    "WeightEvaluator",
    "build_radial_mesh",
    "build_tensor_mesh",
    "closure",
    "convergence_study",
    "decay_fit",
    "multi_electron_family",
    "solve_3d",
    "solve_magnetic",
    "solve_radial",
]
