"""Linear symmetries of quaternionic oscillators.

A skew matrix X generates a symmetry of x' = sum c_alpha L_alpha x when

    [X, L_alpha] = sum_beta J_{alpha beta} L_beta,    J skew,  J c = 0.

For c != 0 the admissible J form the line spanned by J_c, (J_c)_{ab} = eps_{abg} c_g,
so the unknowns are the strictly lower entries of X and one scalar s with J = s J_c.
The solutions split into the commutant of the structure (s = 0, an sp(n)) and a
single rotation generator (s = 1), for a total dimension 1 + n(2n + 1).
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space, qr, solve_triangular, svd

from hyperflow.errors import (
    DegenerateSystemError,
    InconsistencyError,
    InvalidStructureError,
    NonClosureError,
    StructureError,
)
from hyperflow.invariants import block_radii
from hyperflow.structures import (
    LEVI_CIVITA,
    ComplexStructureTriple,
    as_triple,
    dual_triple,
    verify_quaternionic,
)

logger = logging.getLogger(__name__)

STRUCTURE_TOL = 1e-8
NULL_SPACE_TOL = 1e-10
CLOSURE_TOL = 1e-10
SPLIT_TOL = 1e-8
FD_STEP = 1e-6
DETECT_TOL = 1e-8
EQUIVARIANCE_TOL = 1e-6

Field = Callable[[np.ndarray], np.ndarray]


def rotation_axis_generator(c) -> np.ndarray:
    """J_c with (J_c)_{alpha beta} = sum_gamma eps_{alpha beta gamma} c_gamma."""
    return np.einsum("abg,g->ab", LEVI_CIVITA, np.asarray(c, dtype=float))


def _skew_basis(dim: int) -> Tuple[np.ndarray, np.ndarray]:
    rows, cols = np.tril_indices(dim, k=-1)
    return rows, cols


def _skew_from_coordinates(coords: np.ndarray, dim: int) -> np.ndarray:
    rows, cols = _skew_basis(dim)
    X = np.zeros((dim, dim))
    X[rows, cols] = coords
    return X - X.T


@dataclass(frozen=True, eq=False)
class InvarianceSolution:
    """A pair (X, J) solving the invariance equation."""

    X: np.ndarray
    J: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        J = np.array(self.J, dtype=float)
        if X.ndim != 2 or X.shape[0] != X.shape[1] or J.shape != (3, 3):
            raise StructureError(f"invalid solution shapes X {X.shape}, J {J.shape}")
        X.setflags(write=False)
        J.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "J", J)

    def residual(self, triple) -> float:
        """max_alpha |[X, L_alpha] - sum_beta J_{alpha beta} L_beta|."""
        triple = as_triple(triple)
        worst = 0.0
        for a in range(3):
            lhs = self.X @ triple[a] - triple[a] @ self.X
            rhs = sum(self.J[a, b] * triple[b] for b in range(3))
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        return worst


def structure_constants(matrices: Sequence[np.ndarray]) -> Tuple[np.ndarray, float]:
    """C with [X_i, X_j] ~ sum_k C_ijk X_k and the largest residual of that fit."""
    k = len(matrices)
    if k == 0:
        return np.zeros((0, 0, 0)), 0.0
    span = np.column_stack([m.ravel() for m in matrices])
    q, r = qr(span, mode="economic")

    constants = np.zeros((k, k, k))
    residual = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            bracket = (matrices[i] @ matrices[j] - matrices[j] @ matrices[i]).ravel()
            projected = q.T @ bracket
            coefficients = solve_triangular(r, projected)
            constants[i, j] = coefficients
            constants[j, i] = -coefficients
            residual = max(residual, float(np.linalg.norm(bracket - q @ projected)))
    return constants, residual


@dataclass(frozen=True, eq=False)
class LieAlgebraBasis:
    """Basis of a matrix Lie algebra with the data of the solve that produced it."""

    dim: int
    basis: Tuple[InvarianceSolution, ...]
    structure_constants: np.ndarray
    closure_residual: float = 0.0
    singular_value_gap: Optional[float] = None
    threshold: Optional[float] = None
    c: Optional[np.ndarray] = None

    @classmethod
    def from_solutions(
        cls, solutions: Sequence[InvarianceSolution], **kwargs
    ) -> "LieAlgebraBasis":
        solutions = tuple(solutions)
        if not solutions:
            raise StructureError("a Lie algebra basis needs at least one element")
        dim = solutions[0].X.shape[0]
        constants, residual = structure_constants([s.X for s in solutions])
        return cls(dim, solutions, constants, residual, **kwargs)

    @classmethod
    def from_matrices(cls, matrices: Sequence[np.ndarray]) -> "LieAlgebraBasis":
        """Basis of plain skew matrices, all with J = 0."""
        return cls.from_solutions(InvarianceSolution(m, np.zeros((3, 3))) for m in matrices)

    @property
    def dimension(self) -> int:
        return len(self.basis)

    @property
    def matrices(self) -> List[np.ndarray]:
        return [s.X for s in self.basis]

    def projection_residual(self, matrix) -> float:
        """Frobenius distance of `matrix` from the span of the basis."""
        span = np.column_stack([m.ravel() for m in self.matrices])
        q, _ = qr(span, mode="economic")
        v = np.asarray(matrix, dtype=float).ravel()
        return float(np.linalg.norm(v - q @ (q.T @ v)))


def invariance_system(triple: ComplexStructureTriple, c) -> np.ndarray:
    """Matrix of the linear map (lower entries of X, s) -> ([X, L_a] - s sum_b (J_c)_ab L_b)_a."""
    dim = triple.dim
    rows, cols = _skew_basis(dim)
    J_c = rotation_axis_generator(c)

    columns = []
    for i, j in zip(rows, cols):
        E = np.zeros((dim, dim))
        E[i, j] = 1.0
        E[j, i] = -1.0
        columns.append(np.concatenate([(E @ L - L @ E).ravel() for L in triple]))
    columns.append(
        np.concatenate([-sum(J_c[a, b] * triple[b] for b in range(3)).ravel() for a in range(3)])
    )
    return np.column_stack(columns)


def solve_invariance(S, c, tol: float = NULL_SPACE_TOL) -> LieAlgebraBasis:
    """All linear symmetries (X, J) of the oscillator with coefficients c on S."""
    S = as_triple(S)
    c = np.asarray(c, dtype=float)
    if c.shape != (3,):
        raise StructureError(f"c must have 3 components, got shape {c.shape}")
    report = verify_quaternionic(S, STRUCTURE_TOL)
    if not report.ok:
        raise InvalidStructureError(
            f"not a quaternionic structure (residual {report.max_residual:.3e})"
        )
    if np.linalg.norm(c) == 0.0:
        raise DegenerateSystemError(
            "c = 0: the field vanishes and every skew matrix is a symmetry"
        )

    system = invariance_system(S, c)
    _, singular, vt = svd(system, full_matrices=False)
    threshold = tol * singular[0]
    rank = int(np.sum(singular > threshold))
    kernel = vt[rank:]
    gap = float(singular[rank - 1] / singular[0]) if rank else 0.0

    J_c = rotation_axis_generator(c)
    solutions = [
        InvarianceSolution(_skew_from_coordinates(v[:-1], S.dim), v[-1] * J_c) for v in kernel
    ]
    basis = LieAlgebraBasis.from_solutions(
        solutions, singular_value_gap=gap, threshold=threshold, c=c
    )
    logger.info(
        "invariance algebra on R^%d: dimension %d (gap %.2e, closure %.2e)",
        S.dim, basis.dimension, gap, basis.closure_residual,
    )
    return basis


class SplitComponents(NamedTuple):
    commutant: LieAlgebraBasis
    rotation_generator: InvarianceSolution


def split_components(B: LieAlgebraBasis, c=None, tol: float = SPLIT_TOL) -> SplitComponents:
    """Separate the J = 0 commutant from the rotation generator normalized to J = J_c.

    The rotation generator's X part is made Frobenius-orthogonal to the commutant.
    """
    c = np.asarray(c if c is not None else B.c, dtype=float)
    J_c = rotation_axis_generator(c)
    scale = float(np.sum(J_c * J_c))
    if scale == 0.0:
        raise DegenerateSystemError("c = 0 has no rotation generator")

    # s_i with J_i = s_i J_c
    s = np.array([np.sum(sol.J * J_c) / scale for sol in B.basis])
    if np.linalg.norm(s) <= tol:
        raise InconsistencyError("no solution with J != 0; the rotation generator is missing")

    mats = np.array(B.matrices)
    commutant_coords = null_space(s[None, :])
    commutant_mats = [np.tensordot(a, mats, axes=1) for a in commutant_coords.T]

    weights = s / float(s @ s)
    X = np.tensordot(weights, mats, axes=1)
    if commutant_mats:
        span = np.column_stack([m.ravel() for m in commutant_mats])
        q, _ = qr(span, mode="economic")
        X = X - (q @ (q.T @ X.ravel())).reshape(X.shape)
    rotation = InvarianceSolution(X, J_c)

    commutant = (
        LieAlgebraBasis.from_matrices(commutant_mats)
        if commutant_mats
        else LieAlgebraBasis(B.dim, (), np.zeros((0, 0, 0)))
    )
    return SplitComponents(commutant, rotation)


def killing_form(B: LieAlgebraBasis) -> np.ndarray:
    """K_ij = tr(ad X_i ad X_j) from the structure constants."""
    C = B.structure_constants
    return np.einsum("ikl,jlk->ij", C, C)


class ClosureReport(NamedTuple):
    max_residual: float
    structure_constants: np.ndarray
    commutation_residual: Optional[float]


def closure_check(B: LieAlgebraBasis, tol: float = CLOSURE_TOL) -> ClosureReport:
    """Brackets stay in the span; the commutant commutes with the rotation generator."""
    if not B.basis:
        raise StructureError("closure_check needs a nonempty basis")
    constants, residual = structure_constants(B.matrices)
    if residual > tol:
        raise NonClosureError(f"brackets leave the span by {residual:.3e} (tol {tol:.1e})")

    commutation = None
    has_rotation = any(np.max(np.abs(sol.J)) > SPLIT_TOL for sol in B.basis)
    if has_rotation and B.c is not None:
        commutant, rotation = split_components(B)
        X = rotation.X
        commutation = max(
            (float(np.max(np.abs(X @ K - K @ X))) for K in commutant.matrices), default=0.0
        )
        if commutation > tol:
            raise NonClosureError(
                f"commutant does not commute with the rotation generator ({commutation:.3e})"
            )
    return ClosureReport(residual, constants, commutation)


def equivariance_check(
    field: Field, generators: Sequence[np.ndarray], samples: Sequence, h: float = FD_STEP
) -> float:
    """max |A f(x) - Df(x) A x| with Df(x) v by central differences along v."""
    worst = 0.0
    for x in samples:
        x = np.asarray(x, dtype=float)
        f = field(x)
        for A in generators:
            v = A @ x
            directional = (field(x + h * v) - field(x - h * v)) / (2 * h)
            worst = max(worst, float(np.linalg.norm(A @ f - directional)))
    return worst


class SampleEstimate(NamedTuple):
    point: np.ndarray
    radii: np.ndarray
    coefficients: np.ndarray
    residual: float


@dataclass(frozen=True, eq=False)
class DetectionReport:
    estimates: Tuple[SampleEstimate, ...]
    residual: float
    consistency: float
    equivariance: float
    is_oscillator: bool

    def profile_at(self, radii) -> Optional[np.ndarray]:
        """Mean recovered c at the given radii, or None if never sampled."""
        radii = np.asarray(radii, dtype=float)
        hits = [e.coefficients for e in self.estimates if np.allclose(e.radii, radii, rtol=1e-9)]
        return np.mean(hits, axis=0) if hits else None

    def to_dict(self) -> dict:
        return {
            "verdict": "oscillator" if self.is_oscillator else "not-oscillator",
            "residual": self.residual,
            "consistency": self.consistency,
            "equivariance": self.equivariance,
            "estimates": [
                {"radii": e.radii.tolist(), "c": e.coefficients.tolist(), "residual": e.residual}
                for e in self.estimates
            ],
        }


def sphere_samples(radii_groups, per_group: int, rng: np.random.Generator) -> List[np.ndarray]:
    """`per_group` random points with prescribed block radii, for each radii vector."""
    points = []
    for radii in radii_groups:
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        for _ in range(per_group):
            blocks = rng.standard_normal((radii.shape[0], 4))
            blocks /= np.linalg.norm(blocks, axis=1)[:, None]
            points.append((np.sqrt(radii)[:, None] * blocks).ravel())
    return points


def detect_oscillator(
    field: Field,
    S,
    samples: Sequence,
    tol: float = DETECT_TOL,
    equivariance_tol: float = EQUIVARIANCE_TOL,
    h: float = FD_STEP,
) -> DetectionReport:
    """Recover c_alpha from a field on a block-diagonal structure and judge the fit.

    Per block, {x, L_1 x, L_2 x, L_3 x} is an orthogonal frame with squared norms
    rho, so c_alpha = <f(x), L_alpha x> / rho. The field is called an oscillator
    only if the reconstruction is exact, blocks agree on c, samples with equal
    radii agree on c, and the field commutes with the dual structure.
    `h` is the finite-difference step of the equivariance check.
    """
    S = as_triple(S)
    dual = dual_triple(S)

    estimates = []
    consistency = 0.0
    for x in samples:
        x = np.asarray(x, dtype=float)
        radii = block_radii(x)
        if np.any(radii <= 1e-14):
            logger.warning("sample %s has a zero block radius; skipped", x.tolist())
            continue
        f = field(x)
        per_block = np.empty((S.n, 3))
        reconstruction = np.empty_like(f)
        for k in range(S.n):
            sl = slice(4 * k, 4 * k + 4)
            images = [S[a][sl, sl] @ x[sl] for a in range(3)]
            per_block[k] = [images[a] @ f[sl] / radii[k] for a in range(3)]
            reconstruction[sl] = sum(per_block[k, a] * images[a] for a in range(3))
        norm = float(np.linalg.norm(f))
        residual = float(np.linalg.norm(f - reconstruction)) / norm if norm > 0 else 0.0
        consistency = max(consistency, float(np.max(np.ptp(per_block, axis=0))))
        estimates.append(SampleEstimate(x, radii, per_block.mean(axis=0), residual))

    groups = defaultdict(list)
    for e in estimates:
        groups[tuple(np.round(e.radii, 9))].append(e.coefficients)
    for coefficients in groups.values():
        consistency = max(consistency, float(np.max(np.ptp(np.array(coefficients), axis=0))))

    points = [e.point for e in estimates]
    equivariance = equivariance_check(field, list(dual), points, h) if points else 0.0
    residual = max((e.residual for e in estimates), default=0.0)
    scale = max((float(np.max(np.abs(e.coefficients))) for e in estimates), default=0.0)

    is_oscillator = (
        bool(estimates)
        and residual <= tol
        and consistency <= tol * max(1.0, scale)
        and equivariance <= equivariance_tol
    )
    logger.info(
        "detect: %d samples, residual %.2e, consistency %.2e, equivariance %.2e",
        len(estimates), residual, consistency, equivariance,
    )
    return DetectionReport(tuple(estimates), residual, consistency, equivariance, is_oscillator)


def symmetry_json(B: LieAlgebraBasis, split: SplitComponents, closure: ClosureReport) -> dict:
    """The report emitted by the `symmetry` command."""
    return {
        "dimension": B.dimension,
        "commutant_dimension": split.commutant.dimension,
        "rotation_generator": {
            "X": split.rotation_generator.X.tolist(),
            "J": split.rotation_generator.J.tolist(),
        },
        "closure_residual": closure.max_residual,
        "commutation_residual": closure.commutation_residual,
        "singular_value_gap": B.singular_value_gap,
        "killing_form_negative_definite": bool(
            split.commutant.dimension
            and np.all(np.linalg.eigvalsh(killing_form(split.commutant)) < 0)
        ),
    }
