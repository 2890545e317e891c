"""Shape derivatives of potential and Stokes wall operators on 2D domains."""
from .adjoint import (adjoint_potential, adjoint_stokes, identity_check, identity_check_potential,
                      identity_check_stokes, robin_uniqueness_probe, stokes_obstruction_probe)
from .controllability import (DeformationBasis, assemble_response, fit_target, gaussian_target,
                              residual_study)
from .fem import LagrangeSpace, ScalarField, WallProfile, wall_inner_product
from .geometry import (INFLOW, WALL, DeformationField, Domain, annulus, channel_disk, fourier_basis,
                       make_deformation)
from .mesh import TriMesh, build_mesh, deform_mesh, wall_quadrature
from .operators import (POTENTIAL, STOKES, FlowCase, eval_dSp, eval_dSs, eval_Sp, eval_Ss, evaluate,
                        linearize)
from .validation import (fd_oracle, hadamard_boundary_check, hadamard_domain_check,
                         pulled_back_laplacian_check, radial_oracles, taylor_test)

__version__ = "0.1.0"
