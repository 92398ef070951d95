from dataclasses import replace
from math import pi, sqrt

import numpy as np
import pytest
from numpy.testing import assert_allclose

from background.family import SmoothFamily, bump
from background.geometry import flat_geometry
from background.lattice import build_lattice
from background.operator import elliptic_operator
from common import settings
from common.errors import IllConditionedFitError, LatticeError, SingularOperatorError
from parametrix.green import (
    Parametrix,
    affine_shift,
    default_reference_length,
    defect,
    exact_green,
    green_from_column,
    smooth_bump_matrix,
    spectral_green,
    spectral_green_column,
)
from parametrix.hadamard import hadamard_coefficients, hadamard_kernel, hadamard_mass_derivatives, leading_coefficient
from parametrix.parametrix_io import read_parametrix, write_parametrix
from parametrix.smooth_part import fit_coincidence, homogeneous_coincidence, shift_reference_length, smooth_part
from parametrix.transport import parametrix_transport, reference_green


def test_exact_green_has_zero_defect(operator8, green8):
    assert np.abs(defect(operator8, green8)).max() < 1e-10
    assert green8.is_exact_green


def test_exact_green_matches_spectral_sum(lattice8, operator8, green8):
    assert_allclose(green8.kernel, spectral_green(operator8, lattice8), rtol=0, atol=1e-10)


def test_fft_column_reproduces_dense_kernel(torus2, lattice8, green8):
    column = spectral_green_column(torus2, 8)
    assert_allclose(green_from_column(lattice8, column), green8.kernel, rtol=0, atol=1e-10)


def test_negative_mass_is_singular(small_lattice):
    geometry = flat_geometry(2, 4.0, mass_squared=-0.5)
    with pytest.raises(SingularOperatorError) as excinfo:
        exact_green(elliptic_operator(small_lattice, geometry), small_lattice)
    assert excinfo.value.eigenvalue == pytest.approx(-0.5, abs=1e-10)

    with pytest.raises(SingularOperatorError):
        spectral_green_column(geometry, 4)


def test_parametrix_validates_kernel(small_lattice):
    N = small_lattice.site_count
    with pytest.raises(ValueError, match="symmetric"):
        Parametrix(small_lattice, np.triu(np.ones((N, N))), 1.0)
    with pytest.raises(ValueError):
        Parametrix(small_lattice, np.eye(N), 0.0)
    with pytest.raises(ValueError):
        Parametrix(small_lattice, np.eye(N - 1), 1.0)


def test_pairing_uses_volume_weights(small_green, small_lattice, rng):
    f, g = rng.standard_normal((2, small_lattice.site_count))
    mu = small_lattice.volume_weight
    assert_allclose(small_green.pairing(f, g), np.sum((f * mu)[:, None] * small_green.kernel * (g * mu)[None, :]))


def test_affine_shift_moves_coincidence_by_diagonal(lattice8, green8, hadamard8, smooth8):
    S = smooth_bump_matrix(lattice8, bump(lattice8, [4, 4], 1.5), amplitude=0.1)
    shifted = affine_shift(green8, S)
    assert not shifted.is_exact_green
    W = smooth_part(shifted, hadamard8)
    assert_allclose(W.coincidence - smooth8.coincidence, np.diag(S), rtol=0, atol=1e-10)


def test_affine_shift_rejects_asymmetric(green8):
    S = np.zeros_like(green8.kernel)
    S[0, 1] = 1.0
    with pytest.raises(ValueError, match="symmetric"):
        affine_shift(green8, S)


def test_hadamard_parametrix_has_zero_coincidence(green8, hadamard8, smooth8):
    P = affine_shift(green8, -smooth8.kernel)
    assert_allclose(smooth_part(P, hadamard8).coincidence, 0.0, atol=1e-10)


def test_smooth_part_matches_fft_coincidence(torus2, green8, smooth8):
    W, G00 = homogeneous_coincidence(torus2, 8, 2, green8.ref_length_nu)
    assert_allclose(smooth8.coincidence, W, rtol=0, atol=1e-8)
    assert_allclose(G00, green8.kernel[0, 0], rtol=1e-10)


def test_smooth_part_rejects_reference_length_mismatch(torus2, lattice8, green8):
    H = hadamard_kernel(torus2, lattice8, 2, 2.0 * green8.ref_length_nu)
    with pytest.raises(ValueError, match="reference lengths differ"):
        smooth_part(green8, H)


def test_shift_reference_length_agrees_with_direct(torus2, lattice8, operator8, hadamard8, smooth8):
    nu = 2.5 * smooth8.ref_length_nu
    direct = smooth_part(exact_green(operator8, lattice8, nu), hadamard_kernel(torus2, lattice8, 2, nu))
    moved = shift_reference_length(smooth8, hadamard8, nu)
    assert moved.ref_length_nu == nu
    assert_allclose(moved.coincidence, direct.coincidence, rtol=0, atol=1e-9)
    assert_allclose(moved.kernel, direct.kernel, rtol=0, atol=1e-9)


def test_coincidence_fit_needs_samples():
    with pytest.raises(IllConditionedFitError):
        fit_coincidence([0.1, 0.2], [1.0, 2.0], order=2)
    assert fit_coincidence([0.1, 0.2, 0.3, 0.4], [1.5, 2.0, 2.5, 3.0], order=1) == pytest.approx(1.0)


def test_hadamard_leading_coefficients():
    assert leading_coefficient(3) == pytest.approx(1.0 / (4 * pi * sqrt(2.0)))
    assert leading_coefficient(4) == pytest.approx(1.0 / (8 * pi ** 2))
    U, V = hadamard_coefficients(2, 0.0, 1)
    assert V[0] == pytest.approx(-1.0 / (4 * pi))
    assert not np.any(U)
    U, V = hadamard_coefficients(3, 0.7, 2)
    assert U[0] == pytest.approx(leading_coefficient(3))
    assert not np.any(V)


def test_hadamard_kernel_arguments(torus2, lattice8, monkeypatch):
    with pytest.raises(ValueError):
        hadamard_kernel(torus2, lattice8, 2, 0.0)
    monkeypatch.setattr(settings, "MAX_HADAMARD_ORDER", 1)
    with pytest.raises(ValueError, match="exceeds"):
        hadamard_kernel(torus2, lattice8, 2, 1.0)


def test_default_reference_length():
    assert default_reference_length([2 * pi, 1.0]) == pytest.approx(1.0)


def test_parametrix_file(tmp_path, small_green, small_lattice, torus2):
    path = write_parametrix(small_green, str(tmp_path / "P.bin"), order=2)
    restored = read_parametrix(path, small_lattice)
    assert np.array_equal(restored.kernel, small_green.kernel)
    assert restored.ref_length_nu == small_green.ref_length_nu
    assert restored.background_id == small_green.background_id
    assert restored.is_exact_green

    with pytest.raises(LatticeError):
        read_parametrix(path, build_lattice(torus2, 5))


def _mass_family(lattice, geometry):
    profile = bump(lattice, [4, 4], 1.5, amplitude=0.5)
    return SmoothFamily(geometry, lattice, profile != 0.0, c_terms={1: profile})


def test_transport_of_exact_green_is_exact_green(torus2, lattice8, green8):
    family = _mass_family(lattice8, torus2)
    assert parametrix_transport(green8, family, 0.0) is green8

    moved = parametrix_transport(green8, family, 0.3)
    target = reference_green(family, 0.3, green8.ref_length_nu)
    assert_allclose(moved.kernel, target.kernel, rtol=0, atol=1e-12)
    assert moved.is_exact_green


def test_transport_keeps_smooth_difference(torus2, lattice8, green8):
    family = _mass_family(lattice8, torus2)
    S = smooth_bump_matrix(lattice8, bump(lattice8, [2, 2], 1.5), amplitude=0.2)
    moved = parametrix_transport(affine_shift(green8, S), family, 0.3)
    target = reference_green(family, 0.3, green8.ref_length_nu)
    assert_allclose(moved.kernel - target.kernel, S, rtol=0, atol=1e-12)
    assert not moved.is_exact_green


def test_transport_reads_exactness_off_the_transported_kernel(torus2, lattice8, green8):
    family = _mass_family(lattice8, torus2)
    S = smooth_bump_matrix(lattice8, bump(lattice8, [2, 2], 1.5), amplitude=0.2)
    mislabelled = replace(green8, kernel=green8.kernel + S, is_exact_green=True)
    assert not parametrix_transport(mislabelled, family, 0.3).is_exact_green


def test_parametrix_file_keeps_smooth_shift(tmp_path, small_green, small_lattice):
    S = smooth_bump_matrix(small_lattice, bump(small_lattice, [1, 2], 1.5), amplitude=0.1)
    shifted = affine_shift(small_green, S)
    restored = read_parametrix(write_parametrix(shifted, str(tmp_path / "Q.bin")), small_lattice)
    assert np.array_equal(restored.kernel, shifted.kernel)
    assert np.array_equal(restored.smooth_shift, shifted.smooth_shift)
    assert not restored.is_exact_green

    plain = read_parametrix(write_parametrix(small_green, str(tmp_path / "P.bin")), small_lattice)
    assert plain.smooth_shift is None


def test_hadamard_mass_derivatives_match_coefficients():
    step = 1e-6
    for dim in (2, 3, 4):
        dU, dV = hadamard_mass_derivatives(dim, 0.8, 3)
        U_plus, V_plus = hadamard_coefficients(dim, 0.8 + step, 3)
        U_minus, V_minus = hadamard_coefficients(dim, 0.8 - step, 3)
        assert_allclose(dU, (U_plus - U_minus) / (2 * step), rtol=1e-7, atol=1e-12)
        assert_allclose(dV, (V_plus - V_minus) / (2 * step), rtol=1e-7, atol=1e-12)


def test_row_values_freeze_coefficients_at_the_row_site(torus2, lattice8):
    family = _mass_family(lattice8, torus2)
    geometry = family.geometry_at(0.4)
    H = hadamard_kernel(geometry, lattice8, 2, 1.0)
    rows = H.row_values()
    outside = family.mass_squared_rate() == 0.0
    base = hadamard_kernel(torus2, lattice8, 2, 1.0).values()
    assert_allclose(rows[outside], base[outside], rtol=1e-12, atol=0)
    assert not np.allclose(rows, rows.T)
    assert_allclose(hadamard_kernel(torus2, lattice8, 2, 1.0).row_values(), base)


def test_mass_rate_matches_row_difference(torus2, lattice8):
    family = _mass_family(lattice8, torus2)
    step = 1e-5
    plus = hadamard_kernel(family.geometry_at(step), lattice8, 2, 1.0).row_values()
    minus = hadamard_kernel(family.geometry_at(-step), lattice8, 2, 1.0).row_values()
    H0 = hadamard_kernel(torus2, lattice8, 2, 1.0)
    assert_allclose(H0.mass_rate(family.mass_squared_rate()), (plus - minus) / (2 * step), rtol=1e-6, atol=1e-9)
