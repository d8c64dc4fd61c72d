"""Covariant (De Donder-Weyl) Hamiltonian field theory in local coordinates.

Forms and multivectors on the multimomentum bundle, Hamilton-De Donder-Weyl
fields, their integrability, grid integration of the field equations,
Noether currents and the constraint algorithm for restricted systems.
"""

from .bundle import (Connection, HamiltonianSystem, LegendreMap, QuadraticLagrangian, build_hamiltonian_system,
                     legendre_map, poincare_cartan)
from .constraints import ConstraintLedger, RestrictedSystem, restricted_from_lagrangian, run_algorithm
from .equivalence import compare_lagrangian, euler_lagrange_field, legendre_section
from .errors import *  # noqa: F401,F403
from .expr import CoordSystem, Equality, Space, canonical, compare, evaluate, parse, partial, to_text
from .exterior import (DiffForm, MultiVec, contract, d, interior, lie, lie_power, pullback, schouten,
                       vector_bracket, wedge)
from .hdw import (CurvatureReport, Flatness, HDWField, assemble_and_verify, count_freedom, curvature, derive,
                  solve_F, solve_G)
from .integrator import GridSpec, SectionGrid, conserved_current, initial_section, residuals, simulate, step
from .modelfile import Model, load_model
from .noether import (Classification, FirstIntegral, Kind, SymmetryCandidate, canonical_lift, classify,
                      first_integral, generate_integrals, rotation, translation)

__version__ = "0.1.0"
