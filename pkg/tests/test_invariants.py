import math

import numpy as np
import pytest
import sympy
from numpy.testing import assert_allclose

from conftest import random_rotation, unit_vector
from hyperflow.errors import SingularCoordinateError, StructureError
from hyperflow.flows import (
    FlowMethod,
    OscillatorSystem,
    Trajectory,
    closed_form_flow,
    integrate_rk4,
)
from hyperflow.hamiltonian import FrequencyProfile
from hyperflow.invariants import (
    B_NAMES,
    action_spin,
    b_invariants,
    block_radii,
    conservation_report,
    from_action_spin,
    hamiltonian_actions,
    hopf_check,
    independence_rank,
    initial_rank,
    invariants_json,
    q_invariants,
)

E1 = np.array([1.0, 0.0, 0.0, 0.0])


def drifts(reports):
    return {r.name: r.max_drift for r in reports}


def test_block_radii():
    assert_allclose(block_radii([1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0]), [5.0, 9.0])
    with pytest.raises(StructureError):
        block_radii(np.ones(5))


def test_q_invariants_examples():
    assert q_invariants(E1, (2.0, 0.0, 0.0)) == (2.0, 0.0)
    assert q_invariants(np.zeros(4), (1.0, 2.0, 3.0)) == (0.0, 0.0)


def test_b_invariants_at_e1():
    c1, c2, c3 = 1.0, 2.0, 3.0
    assert b_invariants(E1, (c1, c2, c3)) == (c1, c3, c2, 0.0, 0.0, 0.0)


def test_q_invariants_coincide_with_b12_and_b13():
    x = sympy.symbols("x1:5", real=True)
    c = sympy.symbols("c1:4", real=True)
    q2, q3 = q_invariants(x, c)
    b = b_invariants(x, c)
    assert sympy.expand(q2 - b[0]) == 0
    assert sympy.expand(q3 - b[1]) == 0


def test_b_invariants_are_first_integrals_symbolically(positive):
    x = sympy.Matrix(sympy.symbols("x1:5", real=True))
    c = sympy.symbols("c1:4", real=True)
    L = sum((c[a] * sympy.Matrix(positive[a].astype(int)) for a in range(3)), sympy.zeros(4, 4))
    velocity = L * x
    for b in b_invariants(list(x), c):
        derivative = sum(sympy.diff(b, x[i]) * velocity[i] for i in range(4))
        assert sympy.expand(derivative) == 0


def test_invariants_conserved_along_closed_form_flow(rng):
    system = OscillatorSystem.standard(FrequencyProfile.parse(["1 + r1", "2", "2*r1"], 1))
    for _ in range(5):
        x0 = rng.standard_normal(4)
        traj = closed_form_flow(system, x0, np.linspace(0.0, 10.0, 101))
        reports = conservation_report(traj, system)
        assert [r.name for r in reports] == ["rho1", "Q2", "Q3", *B_NAMES]
        assert max(drifts(reports).values()) <= 1e-10


def test_invariants_conserved_along_rk4_flow():
    system = OscillatorSystem.standard(FrequencyProfile.parse("(1, 2, 2)", 1))
    x0 = np.array([1.0, 2.0, 3.0, 4.0]) / math.sqrt(30.0)
    traj = integrate_rk4(system.field, x0, 10.0, 1e-3)
    assert max(drifts(conservation_report(traj, system)).values()) <= 1e-9


def test_invariants_on_rotated_positive_structure(positive, rng):
    structure = positive.conjugated(random_rotation(rng))
    system = OscillatorSystem(structure, FrequencyProfile.parse("(r1, 1, 0)", 1))
    traj = closed_form_flow(system, unit_vector(rng), np.linspace(0.0, 5.0, 51))
    reports = conservation_report(traj, system)
    assert len(reports) == 9
    assert max(drifts(reports).values()) <= 1e-10


def test_negative_structure_reports_radii_only(rng):
    profile = FrequencyProfile.parse("(1, 0, 0)", 1, signature=["-"])
    system = OscillatorSystem.standard(profile)
    traj = closed_form_flow(system, E1, np.linspace(0.0, 3.0, 31))
    reports = conservation_report(traj, system)
    assert [r.name for r in reports] == ["rho1"]
    assert reports[0].max_drift <= 1e-12


def test_two_blocks_report_radii_only(rng):
    system = OscillatorSystem.standard(FrequencyProfile.parse("(r1, r2, 1)", 2))
    traj = closed_form_flow(system, rng.standard_normal(8), np.linspace(0.0, 5.0, 11))
    reports = conservation_report(traj, system)
    assert [r.name for r in reports] == ["rho1", "rho2"]
    assert max(drifts(reports).values()) <= 1e-12


def test_constant_trajectory_has_zero_drift():
    traj = Trajectory([0.0, 1.0], np.tile([1.0, 2.0, 3.0, 4.0], (2, 1)), FlowMethod.RK4)
    system = OscillatorSystem.standard(FrequencyProfile.parse("(1, 0, 0)", 1))
    assert all(r.max_drift == 0.0 for r in conservation_report(traj, system))


def test_hamiltonian_actions_conserved_by_first_hamiltonian(rng):
    system = OscillatorSystem.standard(FrequencyProfile.parse("(3, 0, 0)", 1))
    x0 = rng.standard_normal(4)
    traj = closed_form_flow(system, x0, np.linspace(0.0, 4.0, 41))
    actions = np.array([hamiltonian_actions(x) for x in traj.states])
    assert_allclose(actions, np.tile(hamiltonian_actions(x0), (41, 1)), rtol=1e-12)


def test_independence_rank():
    x = np.array([1.0, 2.0, 3.0, 4.0]) / math.sqrt(30.0)
    assert independence_rank(x, (1.0, 2.0, 2.0)) == 3
    assert independence_rank(np.zeros(4), (1.0, 2.0, 2.0)) == 0


def test_independence_rank_generic_points(rng):
    ranks = [independence_rank(unit_vector(rng), rng.standard_normal(3)) for _ in range(100)]
    assert sum(rank == 3 for rank in ranks) >= 99


def test_initial_rank():
    x0 = np.array([1.0, 2.0, 3.0, 4.0]) / math.sqrt(30.0)
    system = OscillatorSystem.standard(FrequencyProfile.parse("(1, 2, 2)", 1))
    traj = closed_form_flow(system, x0, [0.0, 1.0])
    assert initial_rank(traj, system) == 3
    assert initial_rank(traj, system, tol=1.0) == 0
    assert initial_rank(traj, None) is None

    negative = OscillatorSystem.standard(FrequencyProfile.parse("(1, 2, 2)", 1, signature="-"))
    assert initial_rank(closed_form_flow(negative, x0, [0.0, 1.0]), negative) is None


def test_action_spin_round_trip(rng):
    actions, spins = action_spin([2.0, 0.0, 0.0, 0.0])
    assert_allclose(actions, [4.0])
    assert_allclose(spins, [[1.0, 0.0, 0.0, 0.0]])
    for _ in range(10):
        x = rng.standard_normal(8)
        assert_allclose(from_action_spin(*action_spin(x)), x, atol=1e-14)


def test_action_spin_singular_at_zero_block():
    with pytest.raises(SingularCoordinateError):
        action_spin([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])


def test_hopf_check(rng):
    system = OscillatorSystem.standard(FrequencyProfile.parse("(1, 0, 0)", 1))
    x0 = unit_vector(rng)
    exact = closed_form_flow(system, x0, np.linspace(0.0, 10.0, 101))
    assert hopf_check(exact, system) <= 1e-12
    assert hopf_check(closed_form_flow(system, x0, [0.0]), system) <= 1e-15
    numeric = integrate_rk4(system.field, x0, 10.0, 1e-2)
    assert hopf_check(numeric, system) <= 1e-8


def test_invariants_json():
    traj = Trajectory([0.0, 1.0], np.tile(E1, (2, 1)), FlowMethod.RK4)
    payload = invariants_json([conservation_report(traj)])
    assert payload == {"trajectories": [{"rho1": {"initial": 1.0, "max_drift": 0.0}}]}
