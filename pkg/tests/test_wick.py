import numpy as np
import pytest
from numpy.testing import assert_allclose

from algebra.star_product import star_value
from background.family import SmoothFamily, bump
from background.geometry import flat_geometry
from common.errors import DegreeCapError, ExtensionRequiredError
from extension.diagonal import DiagonalExtension, extension_data
from functionals.jets import jet_field
from functionals.polynomial import max_abs_difference
from parametrix.green import affine_shift, smooth_bump_matrix
from parametrix.smooth_part import smooth_part
from wick.ambiguity import AmbiguityCoefficients, RedefinedWickFamily, WickFamily, extract_ambiguity, redefine_wick
from wick.leibniz import leibniz_check
from wick.monomials import monomial_derivative_axiom_check, wick_monomial
from wick.powers import (
    check_wick_degree,
    equivariance_residual,
    hermiticity_residual,
    translation_residual,
    wick_derivative_axiom_check,
    wick_polynomial,
    wick_power,
    wick_power_value,
)
from wick.smoothness import central_difference, smoothness_in_family_check


@pytest.fixture
def smearing(lattice8):
    return bump(lattice8, [4, 4], 1.2)


@pytest.fixture
def fields(lattice8, rng):
    return 0.5 * rng.standard_normal((2, lattice8.site_count))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_derivative_axiom(k, smooth8, smearing, fields):
    assert wick_derivative_axiom_check(k, smearing, smooth8, fields[0], fields[1]) < 1e-10


def test_hermiticity(smooth8, smearing):
    assert hermiticity_residual(3, smearing * (1.0 + 0.5j), smooth8) < 1e-12


def test_values_at_zero_field(lattice8, smooth8, smearing):
    zero = np.zeros(lattice8.site_count)
    mu = lattice8.volume_weight
    assert wick_power(3, smearing, smooth8, phi=zero) == pytest.approx(0.0, abs=1e-14)
    assert_allclose(wick_power(2, smearing, smooth8, phi=zero), np.sum(smearing * smooth8.coincidence * mu), rtol=1e-12)
    assert_allclose(
        wick_power(4, smearing, smooth8, phi=zero), 3 * np.sum(smearing * smooth8.coincidence ** 2 * mu), rtol=1e-12
    )


def test_closed_form_matches_functional(lattice8, smooth8, smearing, fields):
    value = wick_power_value(4, smearing, smooth8, fields[0], lattice8.volume_weight)
    assert_allclose(value, wick_power(4, smearing, smooth8, phi=fields[0]), rtol=1e-12)


def test_wick_polynomial_hermite_form():
    phi, w = 0.7, -0.3
    assert wick_polynomial(2, phi, w) == pytest.approx(phi ** 2 + w)
    assert wick_polynomial(4, phi, w) == pytest.approx(phi ** 4 + 6 * w * phi ** 2 + 3 * w ** 2)


def test_degree_checks():
    with pytest.raises(ValueError):
        check_wick_degree(-1)
    with pytest.raises(DegreeCapError):
        check_wick_degree(7)


def test_equivariance_under_smooth_shift(lattice8, green8, hadamard8, smooth8, smearing):
    S = smooth_bump_matrix(lattice8, bump(lattice8, [3, 4], 1.5), amplitude=0.05)
    Q = affine_shift(green8, S)
    W_Q = smooth_part(Q, hadamard8)
    for k in (2, 3):
        assert equivariance_residual(k, smearing, green8, smooth8, Q, W_Q) < 1e-10


def test_translation_covariance(smooth8, smearing, fields):
    assert translation_residual(2, smearing, smooth8, [1, 0], fields[0]) < 1e-10


def test_ambiguity_round_trip(lattice8, smooth8, rng):
    N = lattice8.site_count
    injected = AmbiguityCoefficients(N, {j: 0.1 * rng.standard_normal(N) for j in (2, 3, 4)})
    base = WickFamily(smooth8, lattice8)
    recovered = extract_ambiguity(redefine_wick(base, injected), base, 4)
    for j in (2, 3, 4):
        assert_allclose(recovered(j), injected(j), rtol=0, atol=1e-10)


def test_change_of_smooth_part_is_an_ambiguity(lattice8, green8, hadamard8, smooth8):
    S = smooth_bump_matrix(lattice8, bump(lattice8, [4, 4], 1.5), amplitude=0.05)
    shifted = smooth_part(affine_shift(green8, S), hadamard8)
    s = np.diag(S)
    recovered = extract_ambiguity(WickFamily(shifted), WickFamily(smooth8), 4)
    assert_allclose(recovered(2), s, rtol=0, atol=1e-10)
    assert_allclose(recovered(3), 0.0, atol=1e-10)
    assert_allclose(recovered(4), 3 * s ** 2, rtol=0, atol=1e-10)


def test_redefinitions_compose(lattice8, smooth8, smearing, rng):
    N = lattice8.site_count
    first = AmbiguityCoefficients(N, {2: 0.1 * rng.standard_normal(N), 3: 0.05})
    second = AmbiguityCoefficients(N, {2: 0.2, 4: 0.1 * rng.standard_normal(N)})
    base = WickFamily(smooth8, lattice8)

    nested = RedefinedWickFamily(RedefinedWickFamily(base, first), second)
    flat = redefine_wick(redefine_wick(base, first), second)
    assert isinstance(flat.base, WickFamily) and not isinstance(flat.base, RedefinedWickFamily)
    for k in (2, 3, 4, 5):
        assert max_abs_difference(nested.power(k, smearing), flat.power(k, smearing)) < 1e-12


def test_mass_polynomial_ambiguities():
    geometry = flat_geometry(4, 4.0, mass_squared=2.0)
    c = AmbiguityCoefficients.mass_polynomial(geometry, 5, {2: 0.5, 3: 1.0, 4: 2.0})
    assert_allclose(c(2), 1.0)
    assert not np.any(c(3))
    assert_allclose(c(4), 8.0)
    assert_allclose(c(0), 1.0)

    planar = AmbiguityCoefficients.mass_polynomial(flat_geometry(2, 4.0, mass_squared=2.0), 5, {3: 0.25})
    assert_allclose(planar(3), 0.25)


def test_ambiguity_coefficients_start_at_two():
    with pytest.raises(ValueError):
        AmbiguityCoefficients(4, {1: 0.3})
    with pytest.raises(ValueError):
        AmbiguityCoefficients(4, {2: np.ones(3)})


@pytest.fixture
def jet_smearing(lattice8, smearing):
    return np.stack([smearing, 0.5 * bump(lattice8, [4, 3], 1.5), -0.3 * bump(lattice8, [3, 4], 1.5)], axis=1)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_jet_smeared_derivative_axiom(k, smooth8, jet_smearing, fields):
    assert wick_derivative_axiom_check(k, jet_smearing, smooth8, fields[0], fields[1], jet_order=1) < 1e-10


def test_jet_smeared_hermiticity(smooth8, jet_smearing):
    assert hermiticity_residual(3, jet_smearing * (1.0 - 0.5j), smooth8, jet_order=1) < 1e-12


def test_jet_smearing_weighs_gradient_slots(lattice8, smooth8, jet_smearing, fields):
    phi = fields[0]
    mu = lattice8.volume_weight
    slots = np.einsum("xi,xi->x", jet_smearing, jet_field(lattice8, 1, phi))
    assert_allclose(wick_power(1, jet_smearing, smooth8, phi=phi, jet_order=1), np.sum(mu * slots), rtol=1e-12)
    # gradient slots see no coincidence on a homogeneous torus
    expected = np.sum(mu * (phi * slots + jet_smearing[:, 0] * smooth8.coincidence))
    assert_allclose(wick_power(2, jet_smearing, smooth8, phi=phi, jet_order=1), expected, rtol=1e-9)
    with pytest.raises(ValueError):
        wick_power(2, jet_smearing[:, :2], smooth8, jet_order=1)


def _flow(lattice):
    X = np.zeros((lattice.site_count, 2))
    X[:, 0] = bump(lattice, [4, 3], 1.5)
    X[:, 1] = 0.5 * bump(lattice, [3, 4], 1.5)
    return X


def test_leibniz_is_exact_for_linear_fields(lattice8, smooth8, smearing, fields):
    X = _flow(lattice8)
    assert leibniz_check(1, smearing, X, smooth8, fields[0]) < 1e-12
    assert leibniz_check(1, smearing, X, smooth8, fields[0], stencil="forward") < 1e-12
    assert leibniz_check(2, smearing, np.zeros_like(X), smooth8, fields[0]) == 0.0
    with pytest.raises(ValueError):
        leibniz_check(1, smearing, X[:, :1], smooth8, fields[0])
    with pytest.raises(ValueError, match="gradient slots"):
        leibniz_check(1, smearing, X, smooth8, fields[0], jet_order=0)


def test_leibniz_square_leaves_the_lattice_product_rule_defect(lattice8, smooth8, smearing, fields):
    X = _flow(lattice8)
    phi = fields[0]
    mu = lattice8.volume_weight
    defect = 0.0
    for axis in range(2):
        plus, minus = phi[lattice8.neighbor(axis, 1)], phi[lattice8.neighbor(axis, -1)]
        a = lattice8.spacing[axis]
        defect += np.sum(mu * smearing * X[:, axis] * (plus - minus) * (plus + minus - 2 * phi)) / (2 * a)
    assert abs(defect) > 1e-6
    assert leibniz_check(2, smearing, X, smooth8, phi) == pytest.approx(abs(defect), rel=1e-8)


def _disjoint_pair(lattice):
    return bump(lattice, [1, 1], 1.2), bump(lattice, [5, 5], 1.2)


def test_disjoint_monomials_factorize(lattice8, green8, smooth8, fields):
    f, g = _disjoint_pair(lattice8)
    zero = np.zeros(lattice8.site_count)
    assert_allclose(wick_monomial((1, 1), (f, g), green8, smooth8, zero), green8.pairing(f, g), rtol=1e-12)

    scalar = np.sum(g * lattice8.volume_weight)
    assert_allclose(
        wick_monomial((2, 0), (f, g), green8, smooth8, fields[0]),
        scalar * wick_power(2, f, smooth8, phi=fields[0]),
        rtol=1e-12,
    )


def test_overlapping_monomials_need_extension(green8, smooth8, smearing, fields):
    with pytest.raises(ExtensionRequiredError):
        wick_monomial((2, 2), (smearing, smearing), green8, smooth8, fields[0])


def test_monomial_derivative_axiom(green8, smooth8, lattice8, smearing, fields):
    f, g = _disjoint_pair(lattice8)
    residual = monomial_derivative_axiom_check((2, 1), (f, g), green8, smooth8, fields[0], fields[1])
    assert residual < 1e-9

    extension = extension_data(green8, smooth8, 2)
    scale = 1.0 + abs(wick_monomial((2, 2), (smearing, smearing), green8, smooth8, fields[0], extension))
    residual = monomial_derivative_axiom_check(
        (2, 2), (smearing, smearing), green8, smooth8, fields[0], fields[1], extension
    )
    assert residual < 1e-8 * scale


def _overlapping_triple(lattice):
    return bump(lattice, [4, 4], 1.5), bump(lattice, [4, 3], 1.5), bump(lattice, [3, 4], 1.5)


def test_overlapping_pair_matches_extended_star_product(green8, smooth8, smearing, fields):
    extension = DiagonalExtension.from_parametrix(green8, smooth8, 2)
    g = bump(green8.lattice, [4, 3], 1.5)
    value = wick_monomial((2, 2), (smearing, g), green8, smooth8, fields[0], extension)
    star = star_value(wick_power(2, smearing, smooth8), wick_power(2, g, smooth8), green8, fields[0], extension)
    assert_allclose(value, star, rtol=1e-10)


def test_triple_overlap_counterterm_inserts_local_terms(green8, smooth8, lattice8, fields):
    f1, f2, f3 = _overlapping_triple(lattice8)
    extension = DiagonalExtension.from_parametrix(green8, smooth8, 2)
    phi = fields[0]
    base = wick_monomial((2, 2, 2), (f1, f2, f3), green8, smooth8, phi, extension)
    moved = wick_monomial((2, 2, 2), (f1, f2, f3), green8, smooth8, phi, extension.with_counterterm(2, 0.2))

    mu = lattice8.volume_weight
    local_terms = sum(
        np.sum(mu * a * b) * wick_power(2, rest, smooth8, phi=phi)
        for a, b, rest in ((f1, f2, f3), (f1, f3, f2), (f2, f3, f1))
    )
    assert abs(local_terms) > 0.0
    assert_allclose(moved - base, 2 * 0.2 * local_terms, rtol=1e-9)


def test_triple_overlap_derivative_axiom(green8, smooth8, lattice8, fields):
    smearings = _overlapping_triple(lattice8)
    extension = DiagonalExtension.from_parametrix(green8, smooth8, 2)
    scale = 1.0 + abs(wick_monomial((2, 2, 1), smearings, green8, smooth8, fields[0], extension))
    residual = monomial_derivative_axiom_check(
        (2, 2, 1), smearings, green8, smooth8, fields[0], fields[1], extension
    )
    assert residual < 1e-8 * scale


def test_triple_overlap_needs_extension(green8, smooth8, lattice8, fields):
    with pytest.raises(ExtensionRequiredError, match="n = 2..2"):
        wick_monomial((2, 2, 1), _overlapping_triple(lattice8), green8, smooth8, fields[0])
    # single lines between the factors need no extended powers
    value = wick_monomial((1, 1, 1), _overlapping_triple(lattice8), green8, smooth8, fields[0])
    assert np.isfinite(value)


def test_central_difference_on_cubic():
    def cubic(s):
        return 1.0 + 2.0 * s - s ** 2 + 0.5 * s ** 3

    assert central_difference(cubic, 1, 0.1) == pytest.approx(2.0 + 0.5 * 0.1 ** 2 / 4, rel=1e-10)
    assert central_difference(cubic, 2, 0.1) == pytest.approx(-2.0, rel=1e-8)
    assert central_difference(cubic, 3, 0.1) == pytest.approx(3.0, rel=1e-6)


@pytest.mark.slow
def test_wick_square_is_smooth_along_a_mass_family(torus2, lattice8, green8, smearing):
    profile = bump(lattice8, [4, 4], 1.5, amplitude=0.5)
    family = SmoothFamily(torus2, lattice8, profile != 0.0, c_terms={1: profile})
    report = smoothness_in_family_check(2, smearing, family, 2, green8.ref_length_nu)
    assert report["passed"]
    assert report["degree"] == 2
