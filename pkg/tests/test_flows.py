import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.linalg import expm

from conftest import random_rotation, unit_vector
from hyperflow.errors import (
    DivergenceError,
    InvalidStructureError,
    ScenarioError,
    StructureError,
    ZeroFrequencyError,
)
from hyperflow.expressions import parse_expression, parse_triple
from hyperflow.flows import (
    DiracSystem,
    FlowMethod,
    OscillatorSystem,
    Trajectory,
    asymptotic_field,
    closed_form_flow,
    dirac_factors,
    dirac_flow,
    flow_matrix,
    integrate_rk4,
    logistic_radius,
    run_batch,
    sample_times,
    stable_zeros,
    walcher_check,
)
from hyperflow.hamiltonian import FrequencyProfile
from hyperflow.structures import assemble_block_structure

E1 = np.array([1.0, 0.0, 0.0, 0.0])


def oscillator(c, n=1, signature=()):
    return OscillatorSystem.standard(FrequencyProfile.parse(c, n, signature=signature))


def dirac(c, c_hat, n=1):
    return DiracSystem(FrequencyProfile.parse(c, n, c_hat=c_hat))


def test_flow_matrix_quarter_turn(Y):
    assert_allclose(flow_matrix(Y[0], math.pi / 2), Y[0], atol=1e-15)
    assert_array_equal(flow_matrix(Y[0], 0.0), np.eye(4))


def test_flow_matrix_matches_expm(positive):
    L = positive.combination([1.0, 2.0, 2.0])
    assert_allclose(flow_matrix(L, 0.7), expm(0.7 * L), atol=1e-12)


def test_flow_matrix_group_law_and_orthogonality(positive, rng):
    for _ in range(50):
        L = positive.combination(rng.standard_normal(3))
        t, s = rng.uniform(0.0, 5.0, 2)
        A = flow_matrix(L, t)
        assert_allclose(A, expm(t * L), atol=1e-10)
        assert_allclose(A @ A.T, np.eye(4), atol=1e-12)
        assert_allclose(flow_matrix(L, t + s), A @ flow_matrix(L, s), atol=1e-12)


def test_flow_matrix_rejects_zero_and_non_quaternionic(rng):
    with pytest.raises(ZeroFrequencyError):
        flow_matrix(np.zeros((4, 4)), 1.0)
    M = rng.standard_normal((4, 4))
    with pytest.raises(InvalidStructureError):
        flow_matrix(M - M.T, 1.0)


def test_closed_form_rotates_e1():
    system = oscillator("(1, 0, 0)")
    traj = closed_form_flow(system, E1, [0.0, math.pi / 2])
    assert traj.method is FlowMethod.CLOSED_FORM
    assert_array_equal(traj.initial, E1)
    assert_allclose(traj.final, [0.0, -1.0, 0.0, 0.0], atol=1e-15)


def test_closed_form_matches_rk4():
    system = oscillator("(r1, 0, 0)")
    x0 = np.array([2.0, 0.0, 0.0, 0.0])
    exact = closed_form_flow(system, x0, [1.0])
    numeric = integrate_rk4(system.field, x0, 1.0, 1e-4)
    assert_allclose(numeric.final, exact.final, atol=1e-7)


def test_closed_form_preserves_radii_and_lies_on_great_circle(rng):
    system = oscillator(["1 + r1", "2", "r1^2"])
    x0 = 1.3 * unit_vector(rng)
    traj = closed_form_flow(system, x0, np.linspace(0.0, 20.0, 201))
    assert_allclose(traj.radii()[:, 0], 1.69, rtol=1e-12)
    L = system.generator(x0)
    plane = np.column_stack([x0, L @ x0])
    projector = plane @ np.linalg.pinv(plane)
    assert_allclose(traj.states @ projector.T, traj.states, atol=1e-12)


def test_closed_form_two_blocks_mixed_signature(rng):
    system = oscillator(["r1", "1", "r2"], n=2, signature="+-")
    x0 = rng.standard_normal(8)
    times = [0.3, 1.1]
    traj = closed_form_flow(system, x0, times)
    for i, t in enumerate(times):
        assert_allclose(traj.states[i], expm(t * system.generator(x0)) @ x0, atol=1e-12)


def test_closed_form_block_at_origin_stays_there():
    system = oscillator(["r1", "0", "0"], n=2)
    x0 = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    traj = closed_form_flow(system, x0, [0.0, 1.0])
    assert_allclose(traj.final[4:], np.zeros(4))
    assert_allclose(traj.final[:4], [math.cos(1.0), -math.sin(1.0), 0.0, 0.0], atol=1e-15)
    still = closed_form_flow(oscillator("(0, 0, 0)", n=2), x0, [0.0, 1.0])
    assert_array_equal(still.final, x0)


def test_oscillator_system_needs_block_diagonal_structure(positive, rng):
    S = assemble_block_structure("++")
    mixed = S.conjugated(random_rotation(rng, 8))
    with pytest.raises(StructureError):
        OscillatorSystem(mixed, FrequencyProfile.parse("(1, 0, 0)", 2))
    with pytest.raises(StructureError):
        OscillatorSystem(positive, FrequencyProfile.parse("(1, 0, 0)", 2))


def test_dirac_with_zero_hatted_part_is_the_oscillator(rng):
    x0 = unit_vector(rng)
    times = np.linspace(0.0, 3.0, 7)
    expected = closed_form_flow(oscillator("(1, 2, r1)"), x0, times).states
    traj = dirac_flow(dirac("(1, 2, r1)", "(0, 0, 0)"), x0, times)
    assert_allclose(traj.states, expected, atol=1e-14)


def test_dirac_with_zero_coefficients_is_stationary(rng):
    x0 = unit_vector(rng)
    traj = dirac_flow(dirac("(0, 0, 0)", "(0, 0, 0)"), x0, [0.0, 1.0, 2.0])
    assert_allclose(traj.states, np.tile(x0, (3, 1)))


def test_dirac_matches_rk4():
    system = dirac("(1, 0, 0)", "(0, 0, 2)")
    exact = dirac_flow(system, E1, [1.0])
    numeric = integrate_rk4(system.field, E1, 1.0, 1e-4)
    assert_allclose(numeric.final, exact.final, atol=1e-7)


def test_dirac_factors_commute(rng):
    system = dirac("(1, r1, 0)", "(r1, 0, 2)")
    for _ in range(5):
        x0 = rng.standard_normal(4)
        plus, minus = dirac_factors(system, x0, rng.uniform(0.0, 4.0))
        assert_allclose(plus @ minus, minus @ plus, atol=1e-12)


def test_walcher_check_exact_when_hatted_part_vanishes():
    report = walcher_check(dirac("(1, 2, 2)", "(0, 0, 0)"), E1, 1.0, 0.1)
    assert report.commutator_residual <= 1e-12
    assert report.flow_mismatch == 0.0


def test_walcher_check_random(rng):
    for _ in range(20):
        c, c_hat = rng.standard_normal(3), rng.standard_normal(3)
        system = dirac([f"{v:.6f}" for v in c], [f"{v:.6f}" for v in c_hat])
        report = walcher_check(system, rng.standard_normal(4), rng.uniform(0.1, 5.0), 0.1)
        assert report.commutator_residual <= 1e-12
        assert report.flow_mismatch <= 1e-10


def test_rk4_zero_field_is_constant():
    traj = integrate_rk4(lambda x: np.zeros_like(x), E1, 1.0, 0.1)
    assert_allclose(traj.states, np.tile(E1, (len(traj), 1)))


def test_rk4_linear_rotation(Y):
    traj = integrate_rk4(lambda x: Y[0] @ x, E1, math.pi / 2, 1e-3)
    assert traj.method is FlowMethod.RK4
    assert traj.step == 1e-3
    assert traj.times[-1] == math.pi / 2
    assert_allclose(traj.final, [0.0, -1.0, 0.0, 0.0], atol=1e-10)


def test_rk4_output_grid():
    assert_allclose(sample_times(1.0, 0.3), [0.0, 0.3, 0.6, 0.9, 1.0])
    assert_allclose(sample_times(1.0, 0.3, stride=2), [0.0, 0.6, 1.0])
    traj = integrate_rk4(lambda x: -x, E1, 1.0, 0.3, sample_stride=2)
    assert len(traj) == 3


@pytest.mark.parametrize(
    "kwargs, field",
    [
        ({"t_end": 1.0, "dt": 0.0}, "time.dt"),
        ({"t_end": 0.0, "dt": 0.1}, "time.t_end"),
        ({"t_end": 1.0, "dt": 0.1, "stride": 0}, "time.sample_stride"),
    ],
)
def test_sample_times_validation(kwargs, field):
    with pytest.raises(ScenarioError) as excinfo:
        sample_times(**kwargs)
    assert excinfo.value.field == field


def test_rk4_divergence():
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as excinfo:
            integrate_rk4(lambda x: x * x, np.full(4, 1e200), 1.0, 0.1)
    assert excinfo.value.time == pytest.approx(0.1)


def test_rk4_fourth_order(positive):
    L = positive.combination([1.0, 2.0, 2.0])
    exact = expm(L) @ E1
    errors = [
        np.linalg.norm(integrate_rk4(lambda x: L @ x, E1, 1.0, dt).final - exact)
        for dt in (0.05, 0.025)
    ]
    assert math.log2(errors[0] / errors[1]) >= 3.8


def test_trajectory_validation():
    with pytest.raises(StructureError):
        Trajectory([0.0, 1.0], np.zeros((3, 4)), FlowMethod.RK4)
    with pytest.raises(StructureError):
        Trajectory([1.0, 0.0], np.zeros((2, 4)), FlowMethod.RK4)


def test_asymptotic_field_without_radial_term_is_dirac(rng):
    f0 = parse_expression("0", 4)
    c, c_hat = parse_triple("(1, r1, 0)", 4), parse_triple("(0, 2, r1)", 4)
    system = dirac("(1, r1, 0)", "(0, 2, r1)")
    x = rng.standard_normal(4)
    assert_allclose(asymptotic_field(f0, c, c_hat, x), system.field(x), atol=1e-14)


def test_asymptotic_field_radial_rate(rng):
    f0 = parse_expression("r1*(1 - r1)", 4)
    c = parse_triple("(1, 0, r1)", 4)
    for _ in range(10):
        x = rng.standard_normal(4)
        rho = x @ x
        velocity = asymptotic_field(f0, c, None, x)
        assert 2 * x @ velocity == pytest.approx(2 * rho * rho * (1 - rho), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("rho0", [0.25, 0.5, 2.0])
def test_logistic_radius(rho0):
    f0 = parse_expression("1 - r1", 4)
    c = parse_triple("(1, 0, 0)", 4)
    x0 = math.sqrt(rho0) * E1
    traj = integrate_rk4(lambda x: asymptotic_field(f0, c, None, x), x0, 20.0, 1e-2)
    radii = traj.radii()[:, 0]
    assert abs(radii[-1] - 1.0) <= 1e-6
    assert_allclose(radii, logistic_radius(rho0, traj.times), atol=1e-8)


def test_stable_zeros():
    zeros = stable_zeros(parse_expression("(r1 - 1)*(r1 - 4)", 4), (0.0, 5.0))
    assert [z.rho for z in zeros] == pytest.approx([1.0, 4.0], abs=1e-10)
    assert [z.stable for z in zeros] == [True, False]


def test_stable_zeros_of_logistic_profile():
    zeros = stable_zeros(parse_expression("r1*(1 - r1)", 4), (0.0, 2.0))
    assert [z.rho for z in zeros] == pytest.approx([0.0, 1.0], abs=1e-10)
    assert [z.stable for z in zeros] == [False, True]


def test_stable_zeros_double_root_found_only_on_grid():
    f0 = parse_expression("(r1 - 1)^2*(r1 - 3)", 4)
    on_grid = stable_zeros(f0, (0.0, 5.0))
    assert [z.rho for z in on_grid] == pytest.approx([1.0, 3.0], abs=1e-10)
    assert [z.stable for z in on_grid] == [False, False]
    off_grid = stable_zeros(f0, (0.0, 4.9))
    assert [z.rho for z in off_grid] == pytest.approx([3.0], abs=1e-10)


def test_run_batch_preserves_order(rng):
    system = oscillator("(1, 2, r1)")
    states = [rng.standard_normal(4) for _ in range(8)]
    times = np.linspace(0.0, 2.0, 5)

    def flow(x0):
        return closed_form_flow(system, x0, times)

    serial = run_batch(flow, states, workers=0)
    threaded = run_batch(flow, states, workers=4)
    for a, b in zip(serial, threaded):
        assert_array_equal(a.states, b.states)
