import numpy as np

from background.family import SmoothFamily, bump
from background.geometry import scale_background
from background.lattice import build_lattice
from background.operator import elliptic_operator, lattice_action, plane_wave_spectrum
from report.ledger import check_entry

NAME = "Background and operator"

TAYLOR_S = 0.1
SCALE_FACTOR = 1.5


def _relative(residual, reference):
    return float(residual) / max(float(np.abs(reference).max()), 1.0)


def gauge_family(geometry, lattice):
    """A bump in A along every axis; E_s is quadratic in s."""
    profile = bump(lattice, [lattice.sites_per_axis // 2] * lattice.dim, 0.3 * min(lattice.extent), 0.4)
    return SmoothFamily(
        geometry, lattice, profile != 0.0, A_terms={1: np.repeat(profile[:, None], lattice.dim, axis=1)}
    )


def run(config, output_dir):
    geometry = config.geometry()
    lattice = config.lattice()
    E = elliptic_operator(lattice, geometry)
    tolerance = config.tolerance("operator")
    rng = np.random.default_rng(config.seed)
    checks = []

    eigenvalues = np.linalg.eigvalsh(E)
    checks.append(check_entry(
        "E is positive", "invertibility of E", eigenvalues[0], 0.0, passed=eigenvalues[0] > 0.0,
    ))

    phi = rng.standard_normal(lattice.site_count)
    quadratic = 0.5 * lattice.cell_weight * float(phi @ E @ phi)
    checks.append(check_entry(
        "E is the action Hessian", "lattice action",
        abs(lattice_action(lattice, geometry, phi) - quadratic) / abs(quadratic), tolerance,
    ))

    if geometry.periodic and geometry.is_homogeneous:
        symbol = plane_wave_spectrum(lattice, geometry)
        checks.append(check_entry(
            "spectrum matches the plane-wave symbol", "homogeneous torus",
            _relative(np.abs(symbol - eigenvalues).max(), eigenvalues), tolerance,
        ))
        if not np.any(geometry.covector_A):
            ones = np.ones(lattice.site_count)
            checks.append(check_entry(
                "constant field is an eigenvector with eigenvalue c", "homogeneous torus",
                _relative(np.abs(E @ ones - geometry.scalar_c).max(), E), tolerance,
            ))
        perm = lattice.translation([1] + [0] * (lattice.dim - 1))
        checks.append(check_entry(
            "E commutes with translations", "covariance under isometries",
            _relative(np.abs(E[np.ix_(perm, perm)] - E).max(), E), tolerance,
        ))

    scaled = scale_background(geometry, SCALE_FACTOR)
    E_scaled = elliptic_operator(build_lattice(scaled, lattice.sites_per_axis), scaled)
    checks.append(check_entry(
        "E scales with lambda^2", "background scaling",
        _relative(np.abs(E_scaled - SCALE_FACTOR ** 2 * E).max(), E_scaled), tolerance,
    ))

    family = gauge_family(geometry, lattice)
    degree = family.polynomial_degree()
    taylor = sum(TAYLOR_S ** p * family.operator_taylor_coefficient(p) for p in range(degree + 1))
    exact = elliptic_operator(lattice, family.geometry_at(TAYLOR_S))
    checks.append(check_entry(
        f"Taylor polynomial of E_s is exact at degree {degree}", "smooth family",
        _relative(np.abs(exact - taylor).max(), exact), tolerance,
    ))

    return {
        "name": NAME,
        "checks": checks,
        "records_found": len(checks),
    }
