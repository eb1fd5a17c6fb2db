"""Quaternionic (hyperkahler) structures on Euclidean R^{4n}.

The metric is the identity, so the complex structures, the symplectic forms and
the Poisson tensors are all represented by the same skew matrices L_alpha.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.linalg import block_diag

from hyperflow.errors import (
    DegenerateStructureError,
    InconsistencyError,
    InvalidStructureError,
    StructureError,
)

logger = logging.getLogger(__name__)

ORIENTATION_TOL = 1e-9
REDUCTION_TOL = 1e-10

# epsilon[a, b, c] for 0-based indices
LEVI_CIVITA = np.zeros((3, 3, 3))
for _a, _b, _c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_a, _b, _c] = 1.0
    LEVI_CIVITA[_b, _a, _c] = -1.0


class Orientation(Enum):
    """Sign s in (1/2) omega ^ omega = s Omega."""

    POSITIVE = "+"
    NEGATIVE = "-"

    @property
    def sign(self) -> int:
        return 1 if self is Orientation.POSITIVE else -1

    @property
    def dual(self) -> "Orientation":
        return Orientation.NEGATIVE if self is Orientation.POSITIVE else Orientation.POSITIVE

    @classmethod
    def parse(cls, value: Union[str, "Orientation"]) -> "Orientation":
        """Accept '+', '-', 'positive', 'negative' (any case) or an Orientation."""
        if isinstance(value, Orientation):
            return value
        text = str(value).strip().lower()
        if text in ("+", "pos", "positive"):
            return cls.POSITIVE
        if text in ("-", "neg", "negative"):
            return cls.NEGATIVE
        raise StructureError(f"unknown orientation {value!r}")

    @classmethod
    def from_sign(cls, sign: float) -> "Orientation":
        return cls.POSITIVE if sign > 0 else cls.NEGATIVE


_POSITIVE = (
    np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float),
    np.array([[0, 0, 0, 1], [0, 0, 1, 0], [0, -1, 0, 0], [-1, 0, 0, 0]], dtype=float),
    np.array([[0, 0, 1, 0], [0, 0, 0, -1], [-1, 0, 0, 0], [0, 1, 0, 0]], dtype=float),
)
_NEGATIVE = (
    np.array([[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]], dtype=float),
    np.array([[0, 0, 0, -1], [0, 0, 1, 0], [0, -1, 0, 0], [1, 0, 0, 0]], dtype=float),
    np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float),
)
for _m in _POSITIVE + _NEGATIVE:
    _m.setflags(write=False)


def _frozen(matrix) -> np.ndarray:
    array = np.array(matrix, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ComplexStructureTriple:
    """Ordered triple (L_1, L_2, L_3) of 4n x 4n matrices.

    `signature` lists the orientation of each 4x4 diagonal block when the triple is
    block-diagonal and known; it is empty otherwise.
    """

    matrices: tuple
    signature: tuple = field(default=())

    def __post_init__(self):
        if len(self.matrices) != 3:
            raise StructureError(f"a structure needs exactly 3 matrices, got {len(self.matrices)}")
        mats = tuple(_frozen(m) for m in self.matrices)
        shape = mats[0].shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise StructureError(f"structure matrices must be square, got shape {shape}")
        if any(m.shape != shape for m in mats):
            raise StructureError(
                f"structure matrices disagree in shape: {[m.shape for m in mats]}"
            )
        if shape[0] == 0 or shape[0] % 4:
            raise StructureError(f"dimension must be a positive multiple of 4, got {shape[0]}")
        signature = tuple(Orientation.parse(s) for s in self.signature)
        if signature and len(signature) != shape[0] // 4:
            raise StructureError(
                f"signature has {len(signature)} entries for {shape[0] // 4} blocks"
            )
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "signature", signature)

    @property
    def dim(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def n(self) -> int:
        return self.dim // 4

    def __getitem__(self, alpha: int) -> np.ndarray:
        return self.matrices[alpha]

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.matrices)

    def block(self, k: int) -> "ComplexStructureTriple":
        """The 4x4 triple on the k-th (0-based) diagonal block."""
        sl = slice(4 * k, 4 * k + 4)
        sig = (self.signature[k],) if self.signature else ()
        return ComplexStructureTriple(tuple(m[sl, sl] for m in self.matrices), sig)

    def is_block_diagonal(self, tol: float = 0.0) -> bool:
        mask = np.ones((self.dim, self.dim), dtype=bool)
        for k in range(self.n):
            mask[4 * k : 4 * k + 4, 4 * k : 4 * k + 4] = False
        return all(np.max(np.abs(m[mask]), initial=0.0) <= tol for m in self.matrices)

    def combination(self, c: Sequence[float]) -> np.ndarray:
        """L = sum_alpha c_alpha L_alpha."""
        return sum(float(c[a]) * self.matrices[a] for a in range(3))

    def conjugated(
        self, rotation: np.ndarray, signature: Sequence = ()
    ) -> "ComplexStructureTriple":
        """The triple R L_alpha R^T."""
        rotation = np.asarray(rotation, dtype=float)
        if rotation.shape != (self.dim, self.dim):
            raise StructureError(f"rotation of shape {rotation.shape} for dimension {self.dim}")
        return ComplexStructureTriple(
            tuple(rotation @ m @ rotation.T for m in self.matrices), tuple(signature)
        )


StructureLike = Union[ComplexStructureTriple, Sequence]


def as_triple(value: StructureLike) -> ComplexStructureTriple:
    if isinstance(value, ComplexStructureTriple):
        return value
    return ComplexStructureTriple(tuple(value))


class QuaternionicReport(NamedTuple):
    ok: bool
    max_residual: float
    relation_residual: float
    skew_residual: float


class CommutationReport(NamedTuple):
    ok: bool
    max_residual: float


class Reduction(NamedTuple):
    rotation: np.ndarray
    orientation: Orientation


def standard_triple(
    orientation: Union[Orientation, str] = Orientation.POSITIVE,
) -> ComplexStructureTriple:
    """The positively or negatively oriented standard structure on R^4."""
    orientation = Orientation.parse(orientation)
    mats = _POSITIVE if orientation is Orientation.POSITIVE else _NEGATIVE
    return ComplexStructureTriple(mats, (orientation,))


def verify_quaternionic(triple: StructureLike, tol: float = 0.0) -> QuaternionicReport:
    """Check skewness and L_a L_b = eps_abc L_c - delta_ab I entrywise."""
    triple = as_triple(triple)
    identity = np.eye(triple.dim)

    relation = 0.0
    for a in range(3):
        for b in range(3):
            expected = sum(LEVI_CIVITA[a, b, c] * triple[c] for c in range(3))
            if a == b:
                expected = expected - identity
            relation = max(relation, float(np.max(np.abs(triple[a] @ triple[b] - expected))))

    skew = max(float(np.max(np.abs(m + m.T))) for m in triple)
    worst = max(relation, skew)
    return QuaternionicReport(worst <= tol, worst, relation, skew)


def pfaffian4(matrix: np.ndarray) -> float:
    """Pfaffian of a 4x4 skew matrix; (1/2) omega ^ omega = Pf(K) dx1^dx2^dx3^dx4."""
    m = matrix
    return float(m[0, 1] * m[2, 3] - m[0, 2] * m[1, 3] + m[0, 3] * m[1, 2])


def orientation_of(triple: StructureLike, tol: float = ORIENTATION_TOL) -> Orientation:
    """Orientation of a 4-dimensional structure from the signs of its Pfaffians."""
    triple = as_triple(triple)
    if triple.dim != 4:
        raise StructureError(f"orientation_of needs a 4-dimensional structure, got {triple.dim}")

    pfaffians = [pfaffian4(m) for m in triple]
    if min(abs(p) for p in pfaffians) < tol:
        raise DegenerateStructureError(f"Pfaffians {pfaffians} too close to zero")
    signs = {int(np.sign(p)) for p in pfaffians}
    if len(signs) != 1:
        raise InvalidStructureError(f"symplectic forms disagree in orientation: Pf = {pfaffians}")
    return Orientation.from_sign(signs.pop())


def assemble_block_structure(signature: Sequence) -> ComplexStructureTriple:
    """Block-diagonal structure with a standard triple of the given orientation per block."""
    signature = [Orientation.parse(s) for s in signature]
    if not signature:
        raise StructureError("signature must list at least one block")
    blocks = [standard_triple(s) for s in signature]
    mats = tuple(block_diag(*(b[a] for b in blocks)) for a in range(3))
    return ComplexStructureTriple(mats, tuple(signature))


def _reduction_frame(triple: ComplexStructureTriple, orientation: Orientation) -> np.ndarray:
    # Rows v1..v4 with v1 = e1; the remaining rows are the images of e1 that the
    # standard triple of this orientation sends e1 to.
    e1 = np.zeros(4)
    e1[0] = 1.0
    l1, l2, l3 = (m @ e1 for m in triple)
    if orientation is Orientation.POSITIVE:
        return np.vstack([e1, -l1, -l3, -l2])
    return np.vstack([e1, l3, -l1, l2])


def canonical_reduction(triple: StructureLike, tol: float = REDUCTION_TOL) -> Reduction:
    """R in SO(4) with R L_alpha R^T equal to the standard triple of the same orientation."""
    triple = as_triple(triple)
    if triple.dim != 4:
        raise StructureError(
            f"canonical_reduction works on 4x4 structures, got {triple.dim}; use reduce_blockwise"
        )
    report = verify_quaternionic(triple, tol)
    if not report.ok:
        raise InvalidStructureError(
            f"not a quaternionic structure (residual {report.max_residual:.3e})"
        )

    orientation = orientation_of(triple)
    rotation = _reduction_frame(triple, orientation)

    if np.linalg.det(rotation) < 0:
        raise InconsistencyError("reduction frame is not orientation preserving")
    target = standard_triple(orientation)
    reduced = triple.conjugated(rotation)
    mismatch = max(float(np.max(np.abs(reduced[a] - target[a]))) for a in range(3))
    if mismatch > max(tol, 1e-10):
        raise InconsistencyError(f"reduced structure differs from standard by {mismatch:.3e}")

    logger.debug("canonical reduction: orientation %s, mismatch %.2e", orientation.value, mismatch)
    return Reduction(rotation, orientation)


def reduce_blockwise(triple: StructureLike, tol: float = REDUCTION_TOL) -> Reduction:
    """Per-block canonical reduction of a block-diagonal structure.

    Returns the block-diagonal rotation and, as `orientation`, the tuple of block
    orientations.
    """
    triple = as_triple(triple)
    if not triple.is_block_diagonal(tol):
        raise StructureError("reduce_blockwise needs a block-diagonal structure")
    reductions = [canonical_reduction(triple.block(k), tol) for k in range(triple.n)]
    rotation = block_diag(*(r.rotation for r in reductions))
    return Reduction(rotation, tuple(r.orientation for r in reductions))


def dual_triple(triple: StructureLike, tol: float = REDUCTION_TOL) -> ComplexStructureTriple:
    """The oppositely oriented structure commuting with `triple`, block by block."""
    triple = as_triple(triple)
    rotation, signature = reduce_blockwise(triple, tol)
    standard_dual = assemble_block_structure([s.dual for s in signature])
    return standard_dual.conjugated(rotation.T, [s.dual for s in signature])


def dual_commutation_check(
    tol: float = 0.0,
    positive: Optional[StructureLike] = None,
    negative: Optional[StructureLike] = None,
) -> CommutationReport:
    """max_{a,b} |[Y_a, Yhat_b]|; the standard pair unless other triples are given."""
    if positive is None:
        positive = standard_triple(Orientation.POSITIVE)
    if negative is None:
        negative = standard_triple(Orientation.NEGATIVE)
    positive, negative = as_triple(positive), as_triple(negative)
    if positive.dim != negative.dim:
        raise StructureError(f"dimension mismatch: {positive.dim} vs {negative.dim}")

    residual = 0.0
    for y in positive:
        for yhat in negative:
            residual = max(residual, float(np.max(np.abs(y @ yhat - yhat @ y))))
    return CommutationReport(residual <= tol, residual)


def quaternionic_combination(triple: StructureLike, c: Sequence[float]) -> tuple:
    """(L, nu) with L = sum c_alpha L_alpha and nu = |c|, so that L^2 = -nu^2 I."""
    triple = as_triple(triple)
    c = np.asarray(c, dtype=float)
    return triple.combination(c), float(np.linalg.norm(c))


def symplectic_forms(triple: StructureLike, tol: float = 0.0) -> list:
    """Coefficients {(i, j): K_ij} (1-based, i < j) of omega_alpha = sum K_ij dx^i ^ dx^j."""
    triple = as_triple(triple)
    forms = []
    for m in triple:
        rows, cols = np.triu_indices(triple.dim, k=1)
        forms.append(
            {
                (int(i) + 1, int(j) + 1): float(m[i, j])
                for i, j in zip(rows, cols)
                if abs(m[i, j]) > tol
            }
        )
    return forms


def format_form(form: dict) -> str:
    """Render a 2-form like 'dx1^dx2 + dx3^dx4'."""
    terms = []
    for (i, j), value in sorted(form.items()):
        coefficient = "" if value == 1 else "-" if value == -1 else f"{value:g}*"
        terms.append(f"{coefficient}dx{i}^dx{j}")
    return " + ".join(terms).replace("+ -", "- ") or "0"
