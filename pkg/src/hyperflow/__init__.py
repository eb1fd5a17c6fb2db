"""hyperflow - hyperhamiltonian dynamics on Euclidean R^(4n)."""

__version__ = "0.1.0"

from hyperflow.config import HyperflowSettings
from hyperflow.expressions import ScalarExpression, gradient, parse_expression
from hyperflow.flows import (
    DiracSystem,
    OscillatorSystem,
    Trajectory,
    closed_form_flow,
    dirac_flow,
    flow_matrix,
    integrate_rk4,
)
from hyperflow.hamiltonian import (
    FrequencyProfile,
    HamiltonianTriple,
    hamiltonians_from_profile,
    hh_field,
    oscillator_field,
)
from hyperflow.structures import (
    ComplexStructureTriple,
    Orientation,
    assemble_block_structure,
    canonical_reduction,
    standard_triple,
    verify_quaternionic,
)
from hyperflow.symmetry import LieAlgebraBasis, solve_invariance

__all__ = [
    "ComplexStructureTriple",
    "DiracSystem",
    "FrequencyProfile",
    "HamiltonianTriple",
    "HyperflowSettings",
    "LieAlgebraBasis",
    "Orientation",
    "OscillatorSystem",
    "ScalarExpression",
    "Trajectory",
    "__version__",
    "assemble_block_structure",
    "canonical_reduction",
    "closed_form_flow",
    "dirac_flow",
    "flow_matrix",
    "gradient",
    "hamiltonians_from_profile",
    "hh_field",
    "integrate_rk4",
    "oscillator_field",
    "parse_expression",
    "solve_invariance",
    "standard_triple",
    "verify_quaternionic",
]
