import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st
from numpy.testing import assert_allclose

from common import settings
from common.errors import DegreeCapError, LatticeError
from functionals.jets import CENTERED_FIRST, VALUE, jet_component_count, stencil_reproduces_derivative
from functionals.polynomial import (
    LOCAL,
    MIXED,
    conjugate,
    directional_derivative,
    evaluate,
    evaluate_batch,
    field_smeared,
    functional_derivative,
    local_density,
    local_monomial,
    max_abs_difference,
    pointwise_product,
    pullback_isometry,
    random_regular,
    to_dense,
)
from functionals.serialization import functional_from_bytes, functional_to_bytes, read_functional, write_functional

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def test_local_monomial_value(small_lattice, rng):
    f = rng.standard_normal(small_lattice.site_count)
    phi = rng.standard_normal(small_lattice.site_count)
    F = local_monomial(small_lattice, 3, f)
    assert F.locality == LOCAL
    assert_allclose(evaluate(F, phi), np.sum(small_lattice.volume_weight * f * phi ** 3), rtol=1e-13)


def test_batch_evaluation_agrees(small_lattice, rng):
    F = random_regular(small_lattice, 3, rng) + local_monomial(small_lattice, 2, rng.standard_normal(16))
    phis = rng.standard_normal((5, small_lattice.site_count))
    assert_allclose(evaluate_batch(F, phis), [evaluate(F, phi) for phi in phis], rtol=1e-12)


def test_jet_density_dense_form_agrees(small_lattice, rng):
    J = jet_component_count(2, 1)
    density = rng.standard_normal((small_lattice.site_count, J, J))
    F = local_density(small_lattice, {2: density}, jet_order=1)
    phi = rng.standard_normal(small_lattice.site_count)
    assert_allclose(evaluate(to_dense(F), phi), evaluate(F, phi), rtol=1e-12)


def test_local_density_symmetrizes_jet_slots(small_lattice, rng):
    J = jet_component_count(2, 1)
    density = rng.standard_normal((small_lattice.site_count, J, J))
    F = local_density(small_lattice, {2: density}, jet_order=1)
    assert_allclose(F.kernels[2], np.transpose(F.kernels[2], (0, 2, 1)))


def test_derivative_matches_finite_difference(small_lattice, rng):
    F = random_regular(small_lattice, 3, rng)
    phi, psi = rng.standard_normal((2, small_lattice.site_count))
    h = 1e-4
    numeric = (evaluate(F, phi + h * psi) - evaluate(F, phi - h * psi)) / (2 * h)
    assert_allclose(directional_derivative(F, phi, [psi]), numeric, rtol=1e-6)


def test_derivative_kernel_is_symmetric_and_pairs_like_directional(small_lattice, rng):
    F = random_regular(small_lattice, 3, rng)
    phi, psi1, psi2 = rng.standard_normal((3, small_lattice.site_count))
    kernel = functional_derivative(F, phi, 2)
    mu = small_lattice.volume_weight
    assert_allclose(kernel, kernel.T, atol=1e-14)
    paired = np.einsum("ij,i,j->", kernel, mu * psi1, mu * psi2)
    assert_allclose(paired, directional_derivative(F, phi, [psi1, psi2]), rtol=1e-12)


def test_derivative_order_must_be_positive(small_lattice, rng):
    with pytest.raises(ValueError):
        functional_derivative(random_regular(small_lattice, 1, rng), np.zeros(16), 0)


@hypothesis_settings(max_examples=20, deadline=None)
@given(seed=seeds)
def test_pointwise_product_evaluates_to_product(small_lattice, seed):
    rng = np.random.default_rng(seed)
    F = random_regular(small_lattice, 2, rng)
    G = local_monomial(small_lattice, 1, rng.standard_normal(small_lattice.site_count))
    phi = rng.standard_normal(small_lattice.site_count)
    product = pointwise_product(F, G)
    assert product.locality == MIXED
    assert_allclose(evaluate(product, phi), evaluate(F, phi) * evaluate(G, phi), rtol=1e-11, atol=1e-12)


def test_single_site_product_stays_local(small_lattice):
    f = np.zeros(small_lattice.site_count)
    f[5] = 2.0
    product = pointwise_product(local_monomial(small_lattice, 1, f), local_monomial(small_lattice, 2, f))
    assert product.is_local
    phi = np.linspace(-1, 1, small_lattice.site_count)
    mu = small_lattice.volume_weight[5]
    assert_allclose(evaluate(product, phi), (mu * 2.0 * phi[5]) * (mu * 2.0 * phi[5] ** 2))


def test_pullback_by_translation(small_lattice, rng):
    perm = small_lattice.translation([1, 2])
    F = random_regular(small_lattice, 2, rng)
    phi = rng.standard_normal(small_lattice.site_count)
    assert_allclose(evaluate(pullback_isometry(F, perm), phi), evaluate(F, phi[perm]), rtol=1e-12)

    f = rng.standard_normal(small_lattice.site_count)
    moved = pullback_isometry(field_smeared(small_lattice, f), perm)
    assert max_abs_difference(moved, field_smeared(small_lattice, f[np.argsort(perm)])) == 0.0


def test_pullback_rejects_non_isometry(small_lattice, rng):
    perm = np.arange(small_lattice.site_count)
    perm[[0, 5]] = perm[[5, 0]]
    with pytest.raises(ValueError, match="isometry"):
        pullback_isometry(random_regular(small_lattice, 1, rng), perm)


def test_conjugate_evaluates_to_complex_conjugate(small_lattice, rng):
    F = random_regular(small_lattice, 2, rng, complex_valued=True)
    phi = rng.standard_normal(small_lattice.site_count)
    assert_allclose(evaluate(conjugate(F), phi), np.conj(evaluate(F, phi)), rtol=1e-13)


def test_field_length_is_checked(small_lattice, rng):
    with pytest.raises(LatticeError):
        evaluate(random_regular(small_lattice, 1, rng), np.zeros(5))


def test_dense_size_cap(small_lattice, rng, monkeypatch):
    monkeypatch.setattr(settings, "MAX_DENSE_ENTRIES", 100)
    with pytest.raises(DegreeCapError):
        random_regular(small_lattice, 2, rng)


def test_stencils_are_exact_on_low_degree():
    assert stencil_reproduces_derivative(VALUE, 3)
    assert stencil_reproduces_derivative(CENTERED_FIRST, 2)
    assert not stencil_reproduces_derivative(CENTERED_FIRST, 3)


def test_functional_file(tmp_path, small_lattice, rng):
    F = random_regular(small_lattice, 2, rng, complex_valued=True)
    restored = read_functional(write_functional(F, tmp_path / "F.bin"), small_lattice)
    assert restored.locality == F.locality
    assert max_abs_difference(restored, F) == 0.0

    J = jet_component_count(2, 1)
    G = local_density(small_lattice, {2: rng.standard_normal((16, J, J))}, jet_order=1)
    assert max_abs_difference(functional_from_bytes(functional_to_bytes(G), small_lattice), G) == 0.0
