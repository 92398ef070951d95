import numpy as np
import pytest
from numpy.testing import assert_allclose

from background.family import SmoothFamily, bump, family_operator_derivative, power_series, stencil_neighborhood
from background.geometry import engineering_dimensions, flat_geometry, scale_background
from background.lattice import build_lattice
from background.matrix_io import (
    matrix_from_bytes,
    matrix_to_bytes,
    read_matrix_binary,
    read_matrix_csv,
    write_matrix_binary,
    write_matrix_csv,
)
from background.operator import elliptic_operator, lattice_action, plane_wave_spectrum
from common import settings
from common.errors import LatticeError


def test_build_lattice_weights_and_count(torus2):
    lattice = build_lattice(torus2, 4)
    assert lattice.site_count == 16
    assert lattice.spacing == (1.0, 1.0)
    assert_allclose(lattice.total_volume, 16.0)


def test_build_lattice_rejects_tiny_and_oversized(torus2, monkeypatch):
    with pytest.raises(LatticeError):
        build_lattice(torus2, 1)
    monkeypatch.setattr(settings, "MAX_SITES", 50)
    with pytest.raises(LatticeError, match="sites_per_axis <= 7"):
        build_lattice(torus2, 8)


def test_unsupported_geometry_kind():
    with pytest.raises(ValueError):
        flat_geometry(2, 4.0, kind="sphere")


def test_operator_is_symmetric_positive(lattice8, operator8):
    assert_allclose(operator8, operator8.T, atol=0)
    assert np.linalg.eigvalsh(operator8).min() > 0


def test_plane_wave_spectrum_matches_dense(torus2, lattice8, operator8):
    dense = np.sort(np.linalg.eigvalsh(operator8))
    assert_allclose(dense, plane_wave_spectrum(lattice8, torus2), rtol=0, atol=1e-10)


def test_constant_field_is_eigenvector_with_eigenvalue_c(lattice8, operator8):
    ones = np.ones(lattice8.site_count)
    assert_allclose(operator8 @ ones, ones, atol=1e-12)


def test_operator_commutes_with_translations(lattice8, operator8):
    perm = lattice8.translation([1, 0])
    T = np.eye(lattice8.site_count)[perm]
    assert_allclose(T @ operator8, operator8 @ T, atol=1e-12)


def test_action_is_half_quadratic_form(torus2, lattice8, operator8, rng):
    phi = rng.standard_normal(lattice8.site_count)
    expected = 0.5 * lattice8.cell_weight * phi @ operator8 @ phi
    assert_allclose(lattice_action(lattice8, torus2, phi), expected, rtol=1e-12)


def test_gauge_field_keeps_operator_symmetric(small_lattice, torus2):
    A = np.zeros((small_lattice.site_count, 2))
    A[:, 1] = bump(small_lattice, [2, 2], 1.5)
    geometry = flat_geometry(2, 4.0, mass_squared=1.0, covector_A=A)
    E = elliptic_operator(small_lattice, geometry)
    assert_allclose(E, E.T, atol=1e-14)
    assert np.linalg.eigvalsh(E).min() > 0


def test_scaled_operator_is_lambda_squared_times_E(torus2, lattice8, operator8):
    lam = 1.7
    scaled = scale_background(torus2, lam)
    E_lam = elliptic_operator(build_lattice(scaled, 8), scaled)
    assert_allclose(E_lam, lam ** 2 * operator8, rtol=1e-12, atol=1e-12)


def test_scale_background_rejects_non_positive(torus2):
    with pytest.raises(ValueError):
        scale_background(torus2, 0.0)


def test_engineering_dimensions_make_density_scale_free():
    for dim in (2, 3, 4):
        dims = engineering_dimensions(dim)
        # mu ~ lambda^-D, g^{-1} ~ lambda^2, phi^2 ~ lambda^{2 d_phi}
        assert -dim + 2 + 2 * dims["d_phi"] == 0
        assert -dim + dims["d_c"] + 2 * dims["d_phi"] == 0


def test_power_series_of_binomial():
    coeffs = power_series({1: np.asarray(2.0)}, 3.0, 4)
    assert_allclose([float(c) for c in coeffs], [1.0, 6.0, 12.0, 8.0, 0.0], atol=1e-12)


def _mass_family(lattice, geometry, power=1):
    profile = bump(lattice, [4, 4], 1.5, amplitude=0.5)
    return SmoothFamily(geometry, lattice, profile != 0.0, c_terms={power: profile})


def test_mass_family_derivative_matches_finite_difference(torus2, lattice8):
    family = _mass_family(lattice8, torus2)
    h = 1e-4
    E_plus = elliptic_operator(lattice8, family.geometry_at(h))
    E_minus = elliptic_operator(lattice8, family.geometry_at(-h))
    assert_allclose(family_operator_derivative(family, lattice8, 1), (E_plus - E_minus) / (2 * h), atol=1e-8)


def test_derivative_beyond_polynomial_degree_is_zero(torus2, lattice8):
    family = _mass_family(lattice8, torus2)
    assert family.polynomial_degree() == 1
    assert not np.any(family_operator_derivative(family, lattice8, 2))


def test_gauge_family_is_quadratic(torus2, lattice8):
    profile = bump(lattice8, [4, 4], 1.5, amplitude=0.3)
    family = SmoothFamily(torus2, lattice8, profile != 0.0, A_terms={1: np.stack([profile, profile], axis=1)})
    assert family.polynomial_degree() == 2
    s = 0.4
    taylor = sum(s ** n * family.operator_taylor_coefficient(n) for n in range(3))
    assert_allclose(taylor, elliptic_operator(lattice8, family.geometry_at(s)), atol=1e-10)


def test_family_terms_must_vanish_outside_support(torus2, lattice8):
    profile = bump(lattice8, [4, 4], 1.5)
    with pytest.raises(ValueError, match="outside the support"):
        SmoothFamily(torus2, lattice8, np.zeros(lattice8.site_count, dtype=bool), c_terms={1: profile})


def test_stencil_neighborhood_grows_by_one_link(lattice8):
    mask = np.zeros(lattice8.site_count, dtype=bool)
    mask[lattice8.flat_index([4, 4])] = True
    assert stencil_neighborhood(lattice8, mask).sum() == 5


def test_matrix_files(tmp_path, rng):
    M = rng.standard_normal((3, 5))
    assert_allclose(read_matrix_csv(write_matrix_csv(M, tmp_path / "m.csv")), M, rtol=1e-15)
    assert np.array_equal(read_matrix_binary(write_matrix_binary(M, tmp_path / "m.bin")), M)
    restored, offset = matrix_from_bytes(matrix_to_bytes(M))
    assert np.array_equal(restored, M)
    assert offset == 16 + 8 * M.size
