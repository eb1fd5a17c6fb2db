"""Hamiltonian triples, frequency profiles and hyperhamiltonian vector fields.

With the Euclidean metric the Poisson tensors coincide with the complex structures,
so the field of a Hamiltonian triple H is sum_alpha L_alpha grad H_alpha. A radial
Hamiltonian h(rho) contributes grad h = 2 h'(rho) x, hence the coefficient of
L_alpha x in the oscillator form is c_alpha = 2 h_alpha'(rho).
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import sympy

from hyperflow.errors import NotRepresentableError, StructureError
from hyperflow.expressions import SIGMA, ScalarExpression, parse_triple
from hyperflow.invariants import block_radii
from hyperflow.structures import Orientation, as_triple

logger = logging.getLogger(__name__)

ExpressionTriple = Tuple[ScalarExpression, ScalarExpression, ScalarExpression]


def _check_triple(exprs: Sequence[ScalarExpression], what: str) -> ExpressionTriple:
    exprs = tuple(exprs)
    if len(exprs) != 3:
        raise StructureError(f"{what} needs 3 expressions, got {len(exprs)}")
    dims = {e.dim for e in exprs}
    if len(dims) != 1:
        raise StructureError(f"{what} components disagree in dimension: {sorted(dims)}")
    return exprs


@dataclass(frozen=True)
class HamiltonianTriple:
    """Ordered triple (H_1, H_2, H_3) on a common R^{4n}."""

    components: ExpressionTriple

    def __post_init__(self):
        object.__setattr__(self, "components", _check_triple(self.components, "Hamiltonian triple"))

    @classmethod
    def parse(cls, items, n: int) -> "HamiltonianTriple":
        return cls(parse_triple(items, 4 * n))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def __getitem__(self, alpha: int) -> ScalarExpression:
        return self.components[alpha]

    def gradients(self, point) -> np.ndarray:
        """Rows grad H_alpha(point)."""
        return np.vstack([h.gradient(point) for h in self.components])

    def values(self, point) -> np.ndarray:
        return np.array([h.evaluate(point) for h in self.components])

    def __str__(self) -> str:
        return "(" + ", ".join(str(h) for h in self.components) + ")"


@dataclass(frozen=True)
class FrequencyProfile:
    """Coefficients c_alpha(r1..rn), and optionally hatted ones, of an oscillator.

    `signature` is the orientation of each block of the structure the profile is
    meant for; empty means all blocks positive.
    """

    c: ExpressionTriple
    c_hat: Optional[ExpressionTriple] = None
    signature: tuple = field(default=())

    def __post_init__(self):
        c = _check_triple(self.c, "profile c")
        c_hat = _check_triple(self.c_hat, "profile c_hat") if self.c_hat is not None else None
        if c_hat is not None and c_hat[0].dim != c[0].dim:
            raise StructureError(f"c and c_hat disagree in dimension: {c[0].dim} vs {c_hat[0].dim}")
        for name, exprs in (("c", c), ("c_hat", c_hat or ())):
            for alpha, expr in enumerate(exprs):
                if not expr.is_radial:
                    raise StructureError(
                        f"profile {name}[{alpha}] = '{expr}' must depend on r1..rn only"
                    )
        n = c[0].n
        signature = tuple(Orientation.parse(s) for s in self.signature)
        signature = signature or (Orientation.POSITIVE,) * n
        if len(signature) != n:
            raise StructureError(f"signature has {len(signature)} entries for {n} blocks")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "c_hat", c_hat)
        object.__setattr__(self, "signature", signature)

    @classmethod
    def parse(cls, c, n: int, c_hat=None, signature: Sequence = ()) -> "FrequencyProfile":
        """Build from expression strings, e.g. c='(r1, 0, 1 - r1)' or ['r1', '0', '1 - r1']."""
        dim = 4 * n
        hatted = parse_triple(c_hat, dim) if c_hat is not None else None
        return cls(parse_triple(c, dim), hatted, tuple(signature))

    @property
    def dim(self) -> int:
        return self.c[0].dim

    @property
    def n(self) -> int:
        return self.c[0].n

    @property
    def is_dirac(self) -> bool:
        return self.c_hat is not None

    def coefficients(self, radii) -> np.ndarray:
        return np.array([e.evaluate_radial(radii) for e in self.c])

    def hatted_coefficients(self, radii) -> np.ndarray:
        if self.c_hat is None:
            return np.zeros(3)
        return np.array([e.evaluate_radial(radii) for e in self.c_hat])

    def frequency(self, radii) -> float:
        """nu = |c(rho)|, constant along each trajectory."""
        return float(np.linalg.norm(self.coefficients(radii)))

    def hatted_frequency(self, radii) -> float:
        return float(np.linalg.norm(self.hatted_coefficients(radii)))


def _check_point(point, dim: int) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    if point.shape != (dim,):
        raise StructureError(f"point of shape {point.shape} for dimension {dim}")
    return point


def hh_field(H: HamiltonianTriple, S, point) -> np.ndarray:
    """sum_alpha L_alpha grad H_alpha(point)."""
    S = as_triple(S)
    if H.dim != S.dim:
        raise StructureError(f"Hamiltonians on R^{H.dim} with a structure on R^{S.dim}")
    point = _check_point(point, S.dim)
    grads = H.gradients(point)
    return sum(S[a] @ grads[a] for a in range(3))


def oscillator_field(P: FrequencyProfile, S, point) -> np.ndarray:
    """sum_alpha c_alpha(rho_1..rho_n) L_alpha x."""
    S = as_triple(S)
    if P.dim != S.dim:
        raise StructureError(f"profile on R^{P.dim} with a structure on R^{S.dim}")
    if S.signature and S.signature != P.signature:
        raise StructureError(
            f"structure signature {[s.value for s in S.signature]} does not match profile "
            f"signature {[s.value for s in P.signature]}"
        )
    point = _check_point(point, S.dim)
    return S.combination(P.coefficients(block_radii(point))) @ point


def hamiltonians_from_profile(P: FrequencyProfile) -> HamiltonianTriple:
    """H_alpha(sigma) = (1/2) int_0^sigma c_alpha(s) ds with sigma = r1 + ... + rn.

    Only profiles whose coefficients depend on the radii through their sum can be
    inverted here; grad H_alpha = c_alpha(sigma) x is then the oscillator field.
    Dirac profiles are rejected, since a single triple cannot carry c_hat.
    """
    if P.c_hat is not None:
        raise NotRepresentableError(
            "profile has c_hat terms on the dual structure; no Hamiltonian triple "
            "on one structure reproduces them"
        )
    _, rs = P.c[0].symbols
    total = sum(rs, sympy.Integer(0))
    s = sympy.Dummy("s")

    components = []
    for alpha, expr in enumerate(P.c):
        form = expr.sum_radial_form()
        if form is None:
            raise NotRepresentableError(
                f"c[{alpha}] = '{expr}' is not a polynomial in r1 + ... + r{P.n}; "
                "no Hamiltonian triple is constructed for it"
            )
        antiderivative = sympy.integrate(form.subs(SIGMA, s), (s, 0, SIGMA)) / 2
        components.append(ScalarExpression(antiderivative.subs(SIGMA, total), P.dim))

    H = HamiltonianTriple(tuple(components))
    logger.debug("Hamiltonians from profile: %s", H)
    return H
