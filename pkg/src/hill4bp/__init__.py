"""Hill approximation of the equilateral restricted four-body problem.

A massless particle near the smallest vertex of a rotating equilateral
three-body configuration.  The package provides the limit model's vector
fields in two frames, the full four-body reference model with its scaling
oracle, closed-form equilibria with stability classification, Levi-Civita
regularization, Poincare return maps, symmetric periodic-orbit families with
pitchfork detection, and stable/unstable manifold globalization with first
homoclinic intersections.
"""

__version__ = "0.1.0"

from .errors import (ConvergenceError, DomainError, InternalInconsistencyError,
                     SingularityError, StiffnessError)
from .model import (EigenStructure, Frame, GridSpec, HillField, ModelParams,
                    PhaseState, R4BPConfig, R4BPField, ScaledR4BPField,
                    effective_potential, eigen_structure, hill_region_mask,
                    jacobi_constant, r4bp_primaries, r4bp_vector_field,
                    rotate_state, scaled_r4bp_field, vector_field)
from .equilibria import (CriticalMassResult, EquilibriumInfo, EquilibriumLabel,
                         StabilityKind, classify, critical_mass_ratio,
                         equilibrium_point, equilibrium_points, linearize)
from .regularization import (EnergyContext, RegState, RegularizedField,
                             lc_inverse, lc_map, lc_momentum_map,
                             momentum_on_section, reg_coefficients,
                             reg_from_physical, reg_to_physical,
                             regularized_energy, regularized_field,
                             regularized_hamiltonian, time_dilation)
from .integrate import (Crossing, Trajectory, VariationalField, find_crossing,
                        find_crossings, propagate, stm)
from .poincare import (ReturnMapResult, ScanResult, SectionDef, SectionId,
                       SectionPoint, TangencyCurve, make_section,
                       physical_cuts, return_map, return_map_fixed_point,
                       return_map_jacobian, scan, tangency_curve)
from .orbits import (FamilyResult, FamilyTag, FixedQuantity, PeriodicOrbit,
                     PitchforkRecord, continue_family, correct_doubly_symmetric,
                     correct_symmetric, detect_pitchfork, g_family_seed,
                     lyapunov_guess, lyapunov_orbit_at_jacobi, monodromy,
                     orbit_asymmetry, retrograde_seed)
from .manifolds import (CutCurve, GlobalizedManifold, HomoclinicRecord,
                        ManifoldBranch, ManifoldSense, RegionSide,
                        first_intersection, globalize, polyline_intersections,
                        seed_manifold)
