"""Elastic wave equation on curvilinear multiblock grids."""
from .stiffness import (
    isotropic_stiffness, isotropic_from_lame, lame_parameters, plane_strain, thomsen_vti,
    tti_stiffness, rotate_stiffness, rotate_tensor, bond_matrix, tilt_rotation,
    voigt_to_tensor, tensor_to_voigt, christoffel, impedance_matrix, check_positive_definite,
)
from .assembly import (
    ElasticAssembly, ElasticBlock, FreeSurface, DirichletFace, NonReflectingFace, InterfaceFace,
    InterfaceError, assemble, face_condition,
)
