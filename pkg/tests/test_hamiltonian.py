import numpy as np
import pytest
import sympy
from numpy.testing import assert_allclose

from hyperflow.errors import NotRepresentableError, StructureError
from hyperflow.hamiltonian import (
    FrequencyProfile,
    HamiltonianTriple,
    hamiltonians_from_profile,
    hh_field,
    oscillator_field,
)
from hyperflow.structures import assemble_block_structure


def test_hh_field_of_quarter_radius(positive, Y, rng):
    H = HamiltonianTriple.parse(["1/4*r1", "0", "0"], 1)
    for _ in range(5):
        x = rng.standard_normal(4)
        assert_allclose(hh_field(H, positive, x), 0.5 * Y[0] @ x, atol=1e-14)


def test_hh_field_of_zero_triple_vanishes(positive):
    H = HamiltonianTriple.parse("(0, 0, 0)", 1)
    assert_allclose(hh_field(H, positive, [1.0, 2.0, 3.0, 4.0]), np.zeros(4))


def test_hh_field_is_additive(positive, rng):
    a = ["x1*x2", "r1^2", "x3"]
    b = ["x4^3", "1 - r1", "x1*x3"]
    total = [f"({p}) + ({q})" for p, q in zip(a, b)]
    Ha, Hb, Ht = (HamiltonianTriple.parse(items, 1) for items in (a, b, total))
    for _ in range(5):
        x = rng.standard_normal(4)
        assert_allclose(
            hh_field(Ht, positive, x),
            hh_field(Ha, positive, x) + hh_field(Hb, positive, x),
            atol=1e-12,
        )


def test_radial_hamiltonians_give_an_oscillator(positive, rng):
    H = HamiltonianTriple.parse(["r1^2", "3*r1", "0"], 1)
    # c_alpha = 2 h_alpha'(rho)
    profile = FrequencyProfile.parse(["4*r1", "6", "0"], 1)
    for _ in range(5):
        x = rng.standard_normal(4)
        assert_allclose(
            hh_field(H, positive, x), oscillator_field(profile, positive, x), atol=1e-12
        )


def test_hh_field_dimension_mismatch(positive):
    H = HamiltonianTriple.parse(["r1", "0", "0"], 2)
    with pytest.raises(StructureError):
        hh_field(H, positive, np.zeros(8))


def test_oscillator_field_rotates_e1(positive):
    profile = FrequencyProfile.parse("(1, 0, 0)", 1)
    assert_allclose(oscillator_field(profile, positive, [1.0, 0.0, 0.0, 0.0]), [0, -1, 0, 0])


def test_oscillator_field_two_blocks(rng):
    S = assemble_block_structure("++")
    profile = FrequencyProfile.parse(["r1", "0", "r2"], 2)
    x = rng.standard_normal(8)
    rho1, rho2 = np.sum(x[:4] ** 2), np.sum(x[4:] ** 2)
    expected = rho1 * S[0] @ x + rho2 * S[2] @ x
    assert_allclose(oscillator_field(profile, S, x), expected, atol=1e-12)


def test_oscillator_field_signature_must_match(negative):
    profile = FrequencyProfile.parse(["1", "0", "0"], 1)
    with pytest.raises(StructureError):
        oscillator_field(profile, negative, np.ones(4))
    matched = FrequencyProfile.parse(["1", "0", "0"], 1, signature=["-"])
    assert_allclose(oscillator_field(matched, negative, np.ones(4)), negative[0] @ np.ones(4))


def test_profile_must_be_radial():
    with pytest.raises(StructureError):
        FrequencyProfile.parse(["x1", "0", "0"], 1)
    with pytest.raises(StructureError):
        FrequencyProfile.parse(["1", "0", "0"], 1, c_hat=["r1", "x2", "0"])


def test_profile_frequency():
    profile = FrequencyProfile.parse(["1", "2*r1", "2"], 1)
    assert profile.frequency([1.0]) == pytest.approx(3.0)
    assert not profile.is_dirac
    assert profile.hatted_frequency([1.0]) == 0.0


def test_constant_profile_integrates_to_linear_hamiltonian():
    H = hamiltonians_from_profile(FrequencyProfile.parse(["3", "0", "0"], 1))
    r1 = sympy.Symbol("r1", real=True)
    assert H[0].sympy_expr == sympy.Rational(3, 2) * r1
    assert H[1].is_zero and H[2].is_zero


def test_linear_profile_integrates_to_quarter_square(positive, rng):
    profile = FrequencyProfile.parse(["r1", "0", "0"], 1)
    H = hamiltonians_from_profile(profile)
    r1 = sympy.Symbol("r1", real=True)
    assert sympy.expand(H[0].sympy_expr - r1**2 / 4) == 0
    for _ in range(100):
        x = rng.uniform(-1.0, 1.0, 4)
        assert_allclose(
            hh_field(H, positive, x), oscillator_field(profile, positive, x), atol=1e-12
        )


def test_sum_radial_profile_on_two_blocks(rng):
    S = assemble_block_structure("++")
    profile = FrequencyProfile.parse(["r1 + r2", "1", "(r1 + r2)^2"], 2)
    H = hamiltonians_from_profile(profile)
    for _ in range(20):
        x = rng.uniform(-1.0, 1.0, 8)
        assert_allclose(hh_field(H, S, x), oscillator_field(profile, S, x), atol=1e-11)


def test_profile_depending_on_single_block_is_not_representable():
    with pytest.raises(NotRepresentableError):
        hamiltonians_from_profile(FrequencyProfile.parse(["r1", "0", "0"], 2))


def test_dirac_profile_is_not_representable():
    profile = FrequencyProfile.parse("(1, 0, 0)", 1, c_hat="(0, 0, 2)")
    with pytest.raises(NotRepresentableError, match="c_hat"):
        hamiltonians_from_profile(profile)
