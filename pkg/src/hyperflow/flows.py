"""Flows of quaternionic and Dirac oscillators and a fixed-step RK4 integrator.

Block radii are constants of motion of every oscillator, so the coefficients are
frozen at rho(x0) and each block rotates with exp(L t) = cos(nu t) I + sin(nu t)/nu L,
where L^2 = -nu^2 I.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache, partial
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import bisect

from hyperflow.errors import (
    DivergenceError,
    InvalidStructureError,
    NotRepresentableError,
    ScenarioError,
    StructureError,
    ZeroFrequencyError,
)
from hyperflow.expressions import ScalarExpression
from hyperflow.hamiltonian import FrequencyProfile, oscillator_field
from hyperflow.invariants import block_radii
from hyperflow.structures import (
    ComplexStructureTriple,
    Orientation,
    assemble_block_structure,
    as_triple,
    verify_quaternionic,
)

logger = logging.getLogger(__name__)

FREQUENCY_TOL = 1e-10
STRUCTURE_TOL = 1e-10
ROOT_XTOL = 1e-12

Field = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=None)
def _uniform_structure(n: int, orientation: Orientation) -> ComplexStructureTriple:
    return assemble_block_structure([orientation] * n)


class FlowMethod(str, Enum):
    CLOSED_FORM = "closed_form"
    RK4 = "rk4"
    DIRAC = "dirac"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled states x(t_i) with the method that produced them."""

    times: np.ndarray
    states: np.ndarray
    method: FlowMethod
    step: Optional[float] = None

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] != times.shape[0]:
            raise StructureError(f"{times.shape[0]} times for states of shape {states.shape}")
        if times.size == 0:
            raise StructureError("trajectory has no samples")
        if np.any(np.diff(times) <= 0):
            raise StructureError("trajectory times must be strictly increasing")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "method", FlowMethod(self.method))

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def n(self) -> int:
        return self.dim // 4

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def radii(self) -> np.ndarray:
        return np.sum(self.states.reshape(len(self), -1, 4) ** 2, axis=2)


@dataclass(frozen=True)
class OscillatorSystem:
    """x' = sum_alpha c_alpha(rho) L_alpha x on a block-diagonal structure."""

    structure: ComplexStructureTriple
    profile: FrequencyProfile

    def __post_init__(self):
        structure = as_triple(self.structure)
        if structure.dim != self.profile.dim:
            raise StructureError(
                f"structure on R^{structure.dim} with a profile on R^{self.profile.dim}"
            )
        report = verify_quaternionic(structure, STRUCTURE_TOL)
        if not report.ok:
            raise InvalidStructureError(
                f"not a quaternionic structure (residual {report.max_residual:.3e})"
            )
        if not structure.is_block_diagonal(STRUCTURE_TOL):
            raise StructureError("oscillator structures must be block-diagonal")
        object.__setattr__(self, "structure", structure)

    @classmethod
    def standard(cls, profile: FrequencyProfile) -> "OscillatorSystem":
        return cls(assemble_block_structure(profile.signature), profile)

    @property
    def dim(self) -> int:
        return self.structure.dim

    def generator(self, x0) -> np.ndarray:
        """L = sum_alpha c_alpha(rho(x0)) L_alpha."""
        return self.structure.combination(self.profile.coefficients(block_radii(x0)))

    def field(self, x: np.ndarray) -> np.ndarray:
        return oscillator_field(self.profile, self.structure, x)


@dataclass(frozen=True)
class DiracSystem:
    """Sum of oscillators on the positive standard structure and on its dual.

    Only R^4 appears in the literature; on R^{4n} the same construction is applied
    with all blocks positive (resp. negative), which is experimental.
    """

    profile: FrequencyProfile

    def __post_init__(self):
        if self.profile.n > 1:
            logger.info("Dirac system on %d blocks: blockwise extension", self.profile.n)

    @property
    def dim(self) -> int:
        return self.profile.dim

    @property
    def positive(self) -> ComplexStructureTriple:
        return _uniform_structure(self.profile.n, Orientation.POSITIVE)

    @property
    def negative(self) -> ComplexStructureTriple:
        return _uniform_structure(self.profile.n, Orientation.NEGATIVE)

    def generators(self, x0) -> Tuple[np.ndarray, np.ndarray]:
        """(L+, L-) = (sum c_alpha Y_alpha, sum c_hat_alpha Yhat_alpha) at rho(x0)."""
        radii = block_radii(x0)
        return (
            self.positive.combination(self.profile.coefficients(radii)),
            self.negative.combination(self.profile.hatted_coefficients(radii)),
        )

    def field(self, x: np.ndarray) -> np.ndarray:
        plus, minus = self.generators(x)
        return plus @ x + minus @ x


def generator_frequency(L: np.ndarray) -> float:
    """nu with L^2 = -nu^2 I, read off the Frobenius norm."""
    L = np.asarray(L, dtype=float)
    return float(np.sqrt(np.sum(L * L) / L.shape[0]))


def flow_matrix(L, t: float, tol: float = FREQUENCY_TOL) -> np.ndarray:
    """exp(L t) = cos(nu t) I + sin(nu t)/nu L for L^2 = -nu^2 I."""
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise StructureError(f"generator must be square, got shape {L.shape}")
    nu = generator_frequency(L)
    if nu <= tol:
        raise ZeroFrequencyError("generator has zero frequency; the flow is stationary")
    identity = np.eye(L.shape[0])
    defect = float(np.max(np.abs(L @ L + nu**2 * identity)))
    if defect > tol * max(1.0, nu**2):
        raise InvalidStructureError(f"L^2 differs from -nu^2 I by {defect:.3e}")
    return np.cos(nu * t) * identity + (np.sin(nu * t) / nu) * L


def _rotate(L: np.ndarray, x0: np.ndarray, times: np.ndarray, tol: float) -> np.ndarray:
    """Rows exp(L t_i) x0, vectorized over the times."""
    nu = generator_frequency(L)
    if nu <= tol:
        return np.tile(x0, (times.shape[0], 1))
    flow_matrix(L, 0.0, tol)  # validates L^2 = -nu^2 I
    phase = nu * times
    return np.cos(phase)[:, None] * x0 + (np.sin(phase) / nu)[:, None] * (L @ x0)


def _as_times(times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1:
        raise StructureError("times must be a 1-dimensional sequence")
    return times


def _as_state(x0, dim: int) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (dim,):
        raise StructureError(f"initial state of shape {x0.shape} for dimension {dim}")
    return x0


def closed_form_flow(
    system: OscillatorSystem, x0, times, tol: float = FREQUENCY_TOL
) -> Trajectory:
    """Exact trajectory; blocks with zero frequency stay at their initial value."""
    x0 = _as_state(x0, system.dim)
    times = _as_times(times)
    generator = system.generator(x0)

    states = np.empty((times.shape[0], system.dim))
    for k in range(system.dim // 4):
        sl = slice(4 * k, 4 * k + 4)
        block = generator[sl, sl]
        if generator_frequency(block) <= tol:
            logger.warning("block %d has zero frequency; held constant", k + 1)
        states[:, sl] = _rotate(block, x0[sl], times, tol)
    return Trajectory(times, states, FlowMethod.CLOSED_FORM)


def dirac_factors(
    system: DiracSystem, x0, t: float, tol: float = FREQUENCY_TOL
) -> Tuple[np.ndarray, np.ndarray]:
    """(A+(t), A-(t)) with A = cos(nu t) I + sin(nu t) K and K = L/nu; identity if nu = 0."""
    x0 = _as_state(x0, system.dim)
    identity = np.eye(system.dim)
    factors = []
    for L in system.generators(x0):
        if generator_frequency(L) <= tol:
            factors.append(identity)
        else:
            factors.append(flow_matrix(L, t, tol))
    return factors[0], factors[1]


def dirac_flow(system: DiracSystem, x0, times, tol: float = FREQUENCY_TOL) -> Trajectory:
    """x(t) = A+(t) A-(t) x0."""
    x0 = _as_state(x0, system.dim)
    times = _as_times(times)
    states = np.empty((times.shape[0], system.dim))
    for i, t in enumerate(times):
        plus, minus = dirac_factors(system, x0, t, tol)
        states[i] = plus @ (minus @ x0)
    return Trajectory(times, states, FlowMethod.DIRAC)


class WalcherReport(NamedTuple):
    commutator_residual: float
    flow_mismatch: float


def walcher_check(system: DiracSystem, x0, t: float, dt: float) -> WalcherReport:
    """Commutation of the two oscillator fields and order-independence of their flows.

    The commutator is sampled at the Dirac trajectory points spaced by `dt` on [0, t].
    """
    x0 = _as_state(x0, system.dim)
    plus, minus = system.generators(x0)
    commutator = plus @ minus - minus @ plus

    samples = dirac_flow(system, x0, sample_times(t, dt)).states if t > 0 else x0[None, :]
    commutator_residual = float(np.max(np.linalg.norm(samples @ commutator.T, axis=1)))

    a_plus, a_minus = dirac_factors(system, x0, t)
    plus_first = a_minus @ (a_plus @ x0)
    minus_first = a_plus @ (a_minus @ x0)
    return WalcherReport(commutator_residual, float(np.linalg.norm(plus_first - minus_first)))


def sample_times(t_end: float, dt: float, stride: int = 1, t0: float = 0.0) -> np.ndarray:
    """t0 + k dt for every stride-th step, plus t_end; the RK4 output grid."""
    if dt <= 0:
        raise ScenarioError(f"dt must be positive, got {dt}", field="time.dt")
    if t_end <= t0:
        raise ScenarioError(f"t_end must exceed {t0}, got {t_end}", field="time.t_end")
    if stride < 1:
        raise ScenarioError(f"sample_stride must be >= 1, got {stride}", field="time.sample_stride")
    steps = _step_count(t_end - t0, dt)
    indices = list(range(0, steps, stride)) + [steps]
    return np.array([t0 + k * dt if k < steps else t_end for k in indices])


def _step_count(span: float, dt: float) -> int:
    # a final step shorter than 1e-9 dt is merged into the previous one
    return max(1, int(np.ceil(span / dt - 1e-9)))


def integrate_rk4(
    field: Field,
    x0,
    t_end: float,
    dt: float,
    sample_stride: int = 1,
    t0: float = 0.0,
) -> Trajectory:
    """Classical fixed-step Runge-Kutta; the last step is shortened to land on t_end."""
    times = sample_times(t_end, dt, sample_stride, t0)
    x = np.array(x0, dtype=float)
    steps = _step_count(t_end - t0, dt)

    states = [x.copy()]
    t = t0
    for k in range(1, steps + 1):
        t_next = t0 + k * dt if k < steps else t_end
        h = t_next - t
        k1 = field(x)
        k2 = field(x + 0.5 * h * k1)
        k3 = field(x + 0.5 * h * k2)
        k4 = field(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("non-finite state", t_next)
        t = t_next
        if k % sample_stride == 0 or k == steps:
            states.append(x.copy())

    logger.debug("rk4: %d steps of %g up to t=%g", steps, dt, t_end)
    return Trajectory(times, np.vstack(states), FlowMethod.RK4, step=dt)


def asymptotic_field(
    f0: ScalarExpression,
    c: Optional[Sequence[ScalarExpression]],
    c_hat: Optional[Sequence[ScalarExpression]],
    point,
) -> np.ndarray:
    """f0(rho) x + sum c_alpha(rho) Y_alpha x + sum c_hat_alpha(rho) Yhat_alpha x.

    Both rotation terms preserve the radii, so d rho/dt = 2 f0(rho) rho.
    """
    point = _as_state(point, f0.dim)
    radii = block_radii(point)
    n = f0.n
    velocity = f0.evaluate_radial(radii) * point
    for exprs, orientation in ((c, Orientation.POSITIVE), (c_hat, Orientation.NEGATIVE)):
        if exprs is None:
            continue
        coefficients = np.array([e.evaluate_radial(radii) for e in exprs])
        velocity = velocity + _uniform_structure(n, orientation).combination(coefficients) @ point
    return velocity


def logistic_radius(rho0, t):
    """Solution of rho' = 2 (1 - rho) rho with rho(0) = rho0."""
    rho0 = np.asarray(rho0, dtype=float)
    return rho0 / ((1.0 - rho0) * np.exp(-2.0 * np.asarray(t, dtype=float)) + rho0)


class Zero(NamedTuple):
    rho: float
    stable: bool


def stable_zeros(
    f0: ScalarExpression, interval: Tuple[float, float], samples: int = 2000
) -> List[Zero]:
    """Roots of f0 on the interval, stable when f0'(rho0) < 0.

    Sign changes on a uniform grid are refined by bisection and exact zeros at
    grid points are kept. A root of even multiplicity therefore shows up only
    when it lies exactly on a grid point.
    """
    if f0.sum_radial_form() is None:
        raise NotRepresentableError(f"f0 = '{f0}' is not a function of the total radius")
    lo, hi = map(float, interval)
    if not 0.0 <= lo < hi:
        raise StructureError(f"search interval must satisfy 0 <= lo < hi, got {interval}")

    pad = [0.0] * (f0.n - 1)
    derivative = f0.radial_derivative(0)

    def f(rho: float) -> float:
        return f0.evaluate_radial([rho, *pad])

    grid = np.linspace(lo, hi, samples + 1)
    values = np.array([f(rho) for rho in grid])

    roots = []
    for i, rho in enumerate(grid):
        if values[i] == 0.0:
            roots.append(float(rho))
        elif i + 1 < grid.size and values[i] * values[i + 1] < 0.0:
            roots.append(float(bisect(f, rho, grid[i + 1], xtol=ROOT_XTOL)))

    return [Zero(rho, derivative.evaluate_radial([rho, *pad]) < 0.0) for rho in roots]


def run_batch(fn: Callable, items: Iterable, workers: int = 0, **kwargs) -> list:
    """fn(item, **kwargs) for every item, in input order, on a thread pool if workers > 1."""
    call = partial(fn, **kwargs)
    items = list(items)
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(call, items))
    return [call(item) for item in items]
