"""Conserved quantities of quaternionic oscillators and trajectory checks.

The Q and B polynomials are written for the standard positive structure on R^4.
Trajectories on other positive structures are first mapped to standard
coordinates with the canonical reduction; negatively oriented blocks get only
their radii reported, since the polynomials are not conserved there.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from hyperflow.errors import SingularCoordinateError, StructureError
from hyperflow.structures import (
    ComplexStructureTriple,
    Orientation,
    canonical_reduction,
)

if TYPE_CHECKING:
    from hyperflow.flows import Trajectory

logger = logging.getLogger(__name__)

RANK_TOL = 1e-8
JACOBIAN_STEP = 1e-3
B_NAMES = ("B12", "B13", "B14", "B23", "B24", "B34")


def block_radii(x) -> np.ndarray:
    """rho_k = |xi_(k)|^2 for each block of four coordinates."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] % 4:
        raise StructureError(f"state of shape {x.shape} is not a vector in R^(4n)")
    return np.sum(x.reshape(-1, 4) ** 2, axis=1)


# The polynomials below use only arithmetic on the entries, so they also accept
# sympy symbols.


def q_invariants(x, c) -> tuple:
    x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
    c1, c2, c3 = c[0], c[1], c[2]
    q2 = c1 * (x1**2 + x2**2) + c2 * (x2 * x4 - x1 * x3) + c3 * (x1 * x4 + x2 * x3)
    q3 = c3 * (x1**2 + x3**2) + c1 * (x2 * x3 - x1 * x4) + c2 * (x1 * x2 + x3 * x4)
    return q2, q3


def b_invariants(x, c) -> tuple:
    """(B12, B13, B14, B23, B24, B34)."""
    x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
    c1, c2, c3 = c[0], c[1], c[2]
    return (
        c1 * (x1**2 + x2**2) + c3 * (x2 * x3 + x1 * x4) + c2 * (x2 * x4 - x1 * x3),
        c3 * (x1**2 + x3**2) + c2 * (x1 * x2 + x3 * x4) + c1 * (x2 * x3 - x1 * x4),
        c2 * (x1**2 + x4**2) + c1 * (x1 * x3 + x2 * x4) - c3 * (x1 * x2 - x3 * x4),
        c2 * (x2**2 + x3**2) - c1 * (x1 * x3 + x2 * x4) + c3 * (x1 * x2 - x3 * x4),
        c3 * (x2**2 + x4**2) + c1 * (x1 * x4 - x2 * x3) - c2 * (x1 * x2 + x3 * x4),
        c1 * (x3**2 + x4**2) - c3 * (x2 * x3 + x1 * x4) + c2 * (x1 * x3 - x2 * x4),
    )


def hamiltonian_actions(x) -> tuple:
    """I1 = x1^2 + x2^2 and I2 = x3^2 + x4^2, conserved when only H_1 is nonzero."""
    return x[0] ** 2 + x[1] ** 2, x[2] ** 2 + x[3] ** 2


def _invariant_vector(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.array([x @ x, *b_invariants(x, c)])


def independence_rank(x, c, tol: float = RANK_TOL, step: float = JACOBIAN_STEP) -> int:
    """Numerical rank of the Jacobian of (rho, B12, ..., B34) at x.

    Central differences are exact for these quadratics up to rounding, so a
    large step is used. A rank below 3 marks a degenerate sample point.
    """
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    if x.shape != (4,):
        raise StructureError(f"independence_rank works on R^4, got shape {x.shape}")

    jacobian = np.empty((7, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = step
        jacobian[:, j] = (_invariant_vector(x + e, c) - _invariant_vector(x - e, c)) / (2 * step)

    singular = np.linalg.svd(jacobian, compute_uv=False)
    if singular[0] == 0.0:
        return 0
    rank = int(np.sum(singular > tol * singular[0]))
    if rank < 3:
        logger.warning("degenerate sample point x=%s (rank %d); resample", x.tolist(), rank)
    return rank


class ActionSpin(NamedTuple):
    actions: np.ndarray
    spins: np.ndarray


def action_spin(x) -> ActionSpin:
    """I_k = rho_k and s_k = xi_k / sqrt(rho_k) on S^3."""
    x = np.asarray(x, dtype=float)
    radii = block_radii(x)
    if np.any(radii == 0.0):
        raise SingularCoordinateError(
            f"action-spin coordinates are singular at zero block radius (blocks "
            f"{np.flatnonzero(radii == 0.0).tolist()})"
        )
    spins = x.reshape(-1, 4) / np.sqrt(radii)[:, None]
    return ActionSpin(radii, spins)


def from_action_spin(actions, spins) -> np.ndarray:
    actions = np.asarray(actions, dtype=float)
    spins = np.asarray(spins, dtype=float).reshape(-1, 4)
    if actions.shape != (spins.shape[0],):
        raise StructureError(f"{actions.shape[0]} actions for {spins.shape[0]} spins")
    return (np.sqrt(actions)[:, None] * spins).ravel()


@dataclass(frozen=True, eq=False)
class InvariantReport:
    name: str
    values: np.ndarray
    max_drift: float

    @classmethod
    def from_values(cls, name: str, values) -> "InvariantReport":
        values = np.asarray(values, dtype=float)
        initial = values[0]
        drift = float(np.max(np.abs(values - initial)) / max(1.0, abs(initial)))
        return cls(name, values, drift)

    @property
    def initial(self) -> float:
        return float(self.values[0])

    def to_dict(self) -> dict:
        return {"initial": self.initial, "max_drift": self.max_drift}


def _standard_coordinates(structure: ComplexStructureTriple) -> Optional[np.ndarray]:
    """R with R L R^T equal to the positive standard triple, or None if negative."""
    rotation, orientation = canonical_reduction(structure)
    if orientation is not Orientation.POSITIVE:
        return None
    return rotation


def conservation_report(traj: "Trajectory", system=None) -> List[InvariantReport]:
    """Drift of every rho_k and, for 4-dimensional positive systems, of Q2, Q3, B_ij.

    `system` is anything with `structure` and `profile` attributes (an
    OscillatorSystem); without it only the radii are reported.
    """
    states = traj.states
    radii = np.array([block_radii(x) for x in states])
    reports = [
        InvariantReport.from_values(f"rho{k + 1}", radii[:, k]) for k in range(radii.shape[1])
    ]

    if system is None or traj.dim != 4:
        return reports

    rotation = _standard_coordinates(system.structure)
    if rotation is None:
        logger.warning("negatively oriented structure: Q and B invariants are not reported")
        return reports

    c = system.profile.coefficients(radii[0])
    coords = states @ rotation.T
    q = np.array([q_invariants(y, c) for y in coords])
    b = np.array([b_invariants(y, c) for y in coords])
    reports.append(InvariantReport.from_values("Q2", q[:, 0]))
    reports.append(InvariantReport.from_values("Q3", q[:, 1]))
    reports.extend(InvariantReport.from_values(name, b[:, i]) for i, name in enumerate(B_NAMES))
    return reports


def initial_rank(traj: "Trajectory", system, tol: float = RANK_TOL) -> Optional[int]:
    """independence_rank at the first state, in standard coordinates.

    None wherever conservation_report leaves out the B invariants.
    """
    if system is None or traj.dim != 4:
        return None
    rotation = _standard_coordinates(system.structure)
    if rotation is None:
        return None
    x0 = traj.states[0]
    return independence_rank(rotation @ x0, system.profile.coefficients(block_radii(x0)), tol)


def hopf_check(traj: "Trajectory", system) -> float:
    """Max distance of each block of the states from the plane span{x0_k, L^(k) x0_k}."""
    x0 = traj.states[0]
    c = system.profile.coefficients(block_radii(x0))
    generator = system.structure.combination(c)

    worst = 0.0
    for k in range(traj.n):
        sl = slice(4 * k, 4 * k + 4)
        start = x0[sl]
        velocity = generator[sl, sl] @ start
        if np.linalg.norm(velocity) <= 1e-14 * max(1.0, np.linalg.norm(start)):
            logger.debug("block %d is stationary; skipped in hopf_check", k + 1)
            continue
        plane, _ = np.linalg.qr(np.column_stack([start, velocity]))
        block = traj.states[:, sl]
        out_of_plane = block - (block @ plane) @ plane.T
        worst = max(worst, float(np.max(np.linalg.norm(out_of_plane, axis=1))))
    return worst


def invariants_json(reports: Sequence[Sequence[InvariantReport]]) -> Dict[str, list]:
    """{"trajectories": [{name: {initial, max_drift}}, ...]} in trajectory order."""
    return {
        "trajectories": [{r.name: r.to_dict() for r in per_traj} for per_traj in reports]
    }
