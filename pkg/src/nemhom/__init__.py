"""Cubic microlattice scaffolds in a nematic host.

Library for building the periodic box-and-connector scaffold, evaluating
the discrete free energy with its scaled surface anchoring term, the
closed-form homogenised densities, gradient-descent minimisation on voxel
grids, and the sweep studies that measure the convergence claims.
"""

from .energy import (
    AsymSurface,
    ElasticParams,
    GenBulk,
    GenSurface,
    LdgBulk,
    LdgSurface,
    RpBulk,
    RpSurface,
    f_b,
    f_e,
    f_s,
    j_eps_s,
    j_eps_t,
    surface_prefactor,
)
from .errors import DivergedError, EmptyLatticeError, GridResolutionError, ValidationError
from .field import (
    Field,
    Grid,
    HomogenisedEnergy,
    MinimizeConfig,
    ScaffoldEnergy,
    VoxelTag,
    discrete_f_0,
    discrete_f_eps,
    harmonic_extension,
    load_field,
    make_field,
    minimize,
    norms,
    sample_field,
    save_field,
)
from .harness import StudyReport, SweepConfig, fit_order
from .homogenize import (
    asym_matrices,
    asym_matrices_exact,
    cube_surface_moment,
    cube_surface_rp,
    f_hom_asym,
    f_hom_gen,
    f_hom_general,
    f_hom_ldg,
    f_hom_rp,
    f_hom_sym,
    j_0,
    psi,
)
from .qtensor import QTensor, UniaxialSpec, from_components, uniaxial
from .scaffold import (
    Box,
    FaceSet,
    Material,
    Scaffold,
    ScaffoldParams,
    build_lattice,
    build_scaffold,
)

__version__ = "0.1.0"
