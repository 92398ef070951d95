import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st
from numpy.testing import assert_allclose

from algebra.contraction import ContractionOperator, gamma_exp, pair_coefficient, upsilon
from algebra.equivariant import EquivariantObservable, change_of_parametrix
from algebra.scaling import (
    fit_almost_homogeneous,
    rescaled_observable_S,
    scale_parametrix,
    scaling_map,
    scaling_map_between,
)
from algebra.star_product import involution, star_power, star_product, star_value
from background.family import bump
from background.geometry import scale_background
from background.lattice import build_lattice
from background.operator import elliptic_operator
from common.errors import ExtensionRequiredError, IllConditionedFitError, MissingCoincidenceError
from functionals.polynomial import evaluate, field_smeared, local_monomial, max_abs_difference, random_regular
from oracle.pairings import isserlis_moment
from parametrix.green import affine_shift, exact_green, smooth_bump_matrix

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def _shifted(P, rng, amplitude):
    profile = bump(P.lattice, rng.integers(0, 4, size=2), 1.5)
    return affine_shift(P, smooth_bump_matrix(P.lattice, profile, amplitude=amplitude))


def test_star_product_is_commutative(small_green, small_lattice, rng):
    F = random_regular(small_lattice, 2, rng)
    G = random_regular(small_lattice, 1, rng)
    assert max_abs_difference(star_product(F, G, small_green), star_product(G, F, small_green)) < 1e-12


def test_star_product_is_associative(small_green, small_lattice, rng):
    F = random_regular(small_lattice, 2, rng)
    G, H = random_regular(small_lattice, 1, rng), random_regular(small_lattice, 1, rng)
    left = star_product(star_product(F, G, small_green), H, small_green)
    right = star_product(F, star_product(G, H, small_green), small_green)
    assert max_abs_difference(left, right) < 1e-10


def test_star_value_matches_product_kernels(small_green, small_lattice, rng):
    F = random_regular(small_lattice, 2, rng)
    G = random_regular(small_lattice, 2, rng)
    phi = rng.standard_normal(small_lattice.site_count)
    assert_allclose(star_value(F, G, small_green, phi), evaluate(star_product(F, G, small_green), phi), rtol=1e-11)


@hypothesis_settings(max_examples=15)
@given(seed=seeds)
def test_change_of_parametrix_is_a_homomorphism(small_green, small_lattice, seed):
    rng = np.random.default_rng(seed)
    P = small_green
    Q = _shifted(P, rng, 0.05 * rng.uniform(-1.0, 1.0))
    F = random_regular(small_lattice, 2, rng)
    G = random_regular(small_lattice, int(rng.integers(1, 3)), rng)

    left = change_of_parametrix(star_product(F, G, Q), Q, P)
    right = star_product(change_of_parametrix(F, Q, P), change_of_parametrix(G, Q, P), P)
    assert max_abs_difference(left, right) < 1e-11


@hypothesis_settings(max_examples=15)
@given(seed=seeds)
def test_change_of_parametrix_cocycle(small_green, small_lattice, seed):
    rng = np.random.default_rng(seed)
    P = small_green
    Q, R = _shifted(P, rng, 0.05), _shifted(P, rng, -0.03)
    F = random_regular(small_lattice, 3, rng)
    chained = change_of_parametrix(change_of_parametrix(F, R, Q), Q, P)
    assert max_abs_difference(chained, change_of_parametrix(F, R, P)) < 1e-12
    assert change_of_parametrix(F, P, P) is F


def test_involution_reverses_products(small_green, small_lattice, rng):
    F = random_regular(small_lattice, 2, rng, complex_valued=True)
    G = random_regular(small_lattice, 1, rng, complex_valued=True)
    left = involution(star_product(F, G, small_green))
    right = star_product(involution(G), involution(F), small_green)
    assert max_abs_difference(left, right) < 1e-12


def test_star_powers_of_a_field(small_green, small_lattice, rng):
    f = rng.standard_normal(small_lattice.site_count)
    Phi = field_smeared(small_lattice, f)
    zero = np.zeros(small_lattice.site_count)
    two_point = small_green.pairing(f, f)

    assert evaluate(star_power(Phi, 0, small_green), zero) == 1.0
    assert_allclose(evaluate(star_power(Phi, 2, small_green), zero), two_point, rtol=1e-12)
    assert_allclose(evaluate(star_power(Phi, 3, small_green), zero), 0.0, atol=1e-12)
    assert_allclose(evaluate(star_power(Phi, 4, small_green), zero), 3 * two_point ** 2, rtol=1e-11)


def test_star_chain_matches_isserlis(small_green, small_lattice, rng):
    vectors = rng.standard_normal((4, small_lattice.site_count))
    fields = [field_smeared(small_lattice, v) for v in vectors]
    chain = star_product(star_product(fields[0], fields[1], small_green), fields[2], small_green)
    engine = star_value(chain, fields[3], small_green, np.zeros(small_lattice.site_count))
    oracle = isserlis_moment(small_green.kernel, vectors, small_lattice.volume_weight)
    assert_allclose(engine, oracle, rtol=1e-11)


def test_local_squares_need_extension(small_green, small_lattice):
    f = bump(small_lattice, [2, 2], 1.5)
    square = local_monomial(small_lattice, 2, f)
    with pytest.raises(ExtensionRequiredError):
        star_product(square, square, small_green)
    with pytest.raises(ExtensionRequiredError):
        star_value(square, square, small_green, np.zeros(small_lattice.site_count))


def test_overlapping_squares_take_extended_coincidence(small_green, small_lattice, small_extension, rng):
    f = bump(small_lattice, [2, 2], 1.5)
    g = bump(small_lattice, [2, 1], 1.5)
    F, G = local_monomial(small_lattice, 2, f), local_monomial(small_lattice, 2, g)
    mu = small_lattice.volume_weight
    table = small_green.kernel ** 2
    np.fill_diagonal(table, small_extension.coincidence(2, np.diag(small_green.kernel)))

    product = star_product(F, G, small_green, small_extension)
    zero = np.zeros(small_lattice.site_count)
    assert_allclose(evaluate(product, zero), 2 * (f * mu) @ table @ (g * mu), rtol=1e-12)
    phi = rng.standard_normal(small_lattice.site_count)
    assert_allclose(star_value(F, G, small_green, phi, small_extension), evaluate(product, phi), rtol=1e-11)

    moved = star_product(F, G, small_green, small_extension.with_counterterm(2, 0.4))
    assert_allclose(evaluate(moved, phi) - evaluate(product, phi), 0.8 * np.sum(mu * f * g), rtol=1e-10)


def test_field_factors_ignore_extension_data(small_green, small_lattice, small_extension, rng):
    F = local_monomial(small_lattice, 2, bump(small_lattice, [2, 2], 1.5))
    Phi = field_smeared(small_lattice, rng.standard_normal(small_lattice.site_count))
    assert max_abs_difference(star_product(F, Phi, small_green, small_extension), star_product(F, Phi, small_green)) == 0.0


def test_overlapping_jet_squares_are_refused(small_green, small_lattice, small_extension):
    f = bump(small_lattice, [2, 2], 1.5)
    square = local_monomial(small_lattice, 2, f, jet_order=1)
    with pytest.raises(ExtensionRequiredError, match="jet-valued"):
        star_product(square, local_monomial(small_lattice, 2, f), small_green, small_extension)


def test_singular_kernel_cannot_contract_local_square(small_green, small_lattice):
    square = local_monomial(small_lattice, 2, np.ones(small_lattice.site_count))
    with pytest.raises(MissingCoincidenceError):
        gamma_exp(ContractionOperator.from_parametrix(small_green), square)


def test_smooth_contraction_of_local_square_uses_diagonal(small_lattice, rng):
    b = rng.standard_normal(small_lattice.site_count)
    S = ContractionOperator(np.outer(b, b))
    f = rng.standard_normal(small_lattice.site_count)
    contracted = gamma_exp(S, local_monomial(small_lattice, 2, f))
    expected = np.sum(small_lattice.volume_weight * f * b ** 2)
    assert_allclose(evaluate(contracted, np.zeros(small_lattice.site_count)), expected, rtol=1e-12)


def test_exp_upsilon_truncates_on_cubics(small_lattice, rng):
    b = rng.standard_normal(small_lattice.site_count)
    S = ContractionOperator(np.outer(b, b))
    F = random_regular(small_lattice, 3, rng)
    assert max_abs_difference(gamma_exp(S, F), F + upsilon(S, F)) < 1e-12
    assert pair_coefficient(4, 2) == 3


def test_contraction_kernel_must_be_symmetric():
    with pytest.raises(ValueError, match="symmetric"):
        ContractionOperator(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_equivariant_observable_reanchors(small_green, small_lattice, rng):
    P = small_green
    Q = _shifted(P, rng, 0.04)
    A = EquivariantObservable(P, random_regular(small_lattice, 2, rng), "A")
    B = EquivariantObservable(Q, random_regular(small_lattice, 1, rng), "B")

    assert max_abs_difference(A.reanchor(Q).at(P), A.functional) < 1e-12
    product_at_Q = A.star(B).at(Q)
    assert max_abs_difference(product_at_Q, star_product(A.at(Q), B.functional, Q)) < 1e-11
    assert max_abs_difference(A.scaled(2.0).functional, 2.0 * A.functional) == 0.0


def _scaled_setup(torus2, lam):
    geometry = scale_background(torus2, lam)
    lattice = build_lattice(geometry, 4)
    return lattice, exact_green(elliptic_operator(lattice, geometry), lattice)


def test_scaled_green_kernel_pulls_back_to_green_kernel(torus2, small_lattice, small_green):
    lattice, G_lam = _scaled_setup(torus2, 1.6)
    pulled = scale_parametrix(G_lam, 1.6, small_lattice)
    assert_allclose(pulled.kernel, small_green.kernel, rtol=1e-10, atol=1e-12)
    assert pulled.background_id == small_lattice.background_id


def test_scaling_maps_compose(torus2, rng):
    lam, mu, nu = 0.8, 1.3, 2.1
    lattices = {x: _scaled_setup(torus2, x) for x in (lam, mu, nu)}
    lattice_nu, G_nu = lattices[nu]
    F = EquivariantObservable(G_nu, random_regular(lattice_nu, 2, rng), "F")

    via_mu = scaling_map_between(scaling_map_between(F, mu, nu, lattices[mu][0]), lam, mu, lattices[lam][0])
    direct = scaling_map_between(F, lam, nu, lattices[lam][0])
    assert max_abs_difference(via_mu.functional, direct.functional) < 1e-12
    assert_allclose(via_mu.reference.kernel, direct.reference.kernel, rtol=1e-12)

    same = scaling_map_between(F, nu, nu, lattice_nu)
    assert max_abs_difference(same.functional, F.functional) < 1e-14


def test_scaling_rejects_unrelated_lattices(torus2, small_lattice, small_green, rng):
    F = EquivariantObservable(small_green, random_regular(small_lattice, 1, rng))
    with pytest.raises(ValueError, match="scale factor"):
        scaling_map(F, 2.0, small_lattice)


def test_fit_almost_homogeneous_recovers_exponent_and_logs():
    lambdas = np.array([0.5, 0.7, 1.0, 1.4, 2.0, 2.8])
    fit = fit_almost_homogeneous(lambdas, 3.0 * lambdas ** -0.5)
    assert fit["kappa"] == pytest.approx(-0.5, abs=1e-6)
    assert fit["log_degree"] == 0

    fit = fit_almost_homogeneous(lambdas, lambdas ** 1.5 * (2.0 + 0.5 * np.log(lambdas)))
    assert fit["kappa"] == pytest.approx(1.5, abs=1e-6)
    assert fit["log_degree"] == 1
    assert_allclose(np.ravel(fit["coefficients"]), [2.0, 0.5], rtol=1e-5)


def test_fit_almost_homogeneous_edge_cases():
    assert fit_almost_homogeneous([0.5, 1.0, 2.0], [0.0, 0.0, 0.0])["kappa"] == 0.0
    with pytest.raises(IllConditionedFitError):
        fit_almost_homogeneous([1.0], [2.0])
    with pytest.raises(ValueError):
        fit_almost_homogeneous([-1.0, 1.0, 2.0], [1.0, 1.0, 1.0])


def _free_field(geometry, lattice, f):
    return EquivariantObservable(exact_green(elliptic_operator(lattice, geometry), lattice), field_smeared(lattice, f))


def test_free_field_is_scale_invariant_in_two_dimensions(torus2, small_lattice, rng):
    f = bump(small_lattice, [2, 2], 1.5)
    phi = rng.standard_normal(small_lattice.site_count)
    value = rescaled_observable_S(_free_field, torus2, 4, f, 1.7, phi=phi)
    assert_allclose(value, evaluate(field_smeared(small_lattice, f), phi), rtol=1e-12)

    rescaled = rescaled_observable_S(_free_field, torus2, 4, f, 1.7)
    assert rescaled.reference.background_id == small_lattice.background_id
    with pytest.raises(ValueError):
        rescaled_observable_S(_free_field, torus2, 4, f, 0.0)
