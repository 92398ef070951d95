import logging
from dataclasses import dataclass, replace
from math import factorial, pi
from typing import Optional

import numpy as np
from scipy.special import gamma

from background.geometry import BackgroundGeometry
from background.lattice import LatticeSpace
from common import settings

logger = logging.getLogger(__name__)


def effective_mass_squared(geometry: BackgroundGeometry, site_count):
    """
    Per-site m^2 = c + g^{jk} A_j A_k.

    For constant A the gauge coupling only shifts the mass:
    -(d - A) g (d + A) = -g dd + g A A.
    """
    ginv = np.linalg.inv(geometry.metric)
    A = geometry.A_field(site_count)
    return geometry.c_field(site_count) + np.einsum("xi,ij,xj->x", A, ginv, A)


def leading_coefficient(dim):
    """U_0 of the massless Green kernel in D dimensions, in powers of sigma."""
    if dim == 2:
        return 0.0
    return gamma(dim / 2.0 - 1.0) / (4.0 * pi ** (dim / 2.0) * 2.0 ** ((dim - 2) / 2.0))


def hadamard_coefficients(dim, mass_squared, order):
    """
    Flat-space U_n, V_n (n = 0..order) such that
        H = sum U_n sigma^n / sigma^{(D-2)/2} + sum V_n sigma^n log(sigma / nu^2).

    D = 2, 3, 4 carry the full mass series of the free Green kernel; other
    dimensions keep the massless leading term only. `mass_squared` may be an
    array, in which case the coefficients have shape (order+1,) + m2.shape.
    """
    m2 = np.asarray(mass_squared, dtype=float)
    U = np.zeros((order + 1,) + m2.shape)
    V = np.zeros((order + 1,) + m2.shape)

    if dim == 2:
        for n in range(order + 1):
            V[n] = -(1.0 / (4 * pi)) * (m2 / 2.0) ** n / factorial(n) ** 2
    elif dim == 3:
        for n in range(order + 1):
            U[n] = (1.0 / (4 * pi * np.sqrt(2.0))) * (2.0 * m2) ** n / factorial(2 * n)
    elif dim == 4:
        U[0] = 1.0 / (8 * pi ** 2)
        for n in range(order + 1):
            V[n] = (m2 / (16 * pi ** 2)) * (m2 / 2.0) ** n / (factorial(n) * factorial(n + 1))
    else:
        if np.any(m2 != 0.0):
            logger.info(f"D={dim}: Hadamard expansion keeps the massless leading term only")
        U[0] = leading_coefficient(dim)
    return U, V


def hadamard_mass_derivatives(dim, mass_squared, order):
    """d U_n / d m^2 and d V_n / d m^2 of `hadamard_coefficients`, same shapes."""
    m2 = np.asarray(mass_squared, dtype=float)
    dU = np.zeros((order + 1,) + m2.shape)
    dV = np.zeros((order + 1,) + m2.shape)

    if dim == 2:
        for n in range(1, order + 1):
            dV[n] = -(1.0 / (4 * pi)) * n * (m2 / 2.0) ** (n - 1) / (2.0 * factorial(n) ** 2)
    elif dim == 3:
        for n in range(1, order + 1):
            dU[n] = (1.0 / (4 * pi * np.sqrt(2.0))) * 2.0 * n * (2.0 * m2) ** (n - 1) / factorial(2 * n)
    elif dim == 4:
        for n in range(order + 1):
            dV[n] = m2 ** n / (16 * pi ** 2 * 2.0 ** n * factorial(n) ** 2)
    return dU, dV


@dataclass(frozen=True, eq=False)
class HadamardExpansion:
    """
    H(x, y) = U(x, y) / sigma^{(D-2)/2} + V(x, y) log(sigma / nu^2) on a flat lattice.

    U_coeffs / V_coeffs have shape (order+1, N, N) when c varies over sites
    (coefficients taken at the midpoint mass), (order+1,) otherwise. In the
    varying case `site_mass_squared` keeps the per-site m^2, from which
    `row_values` freezes the coefficients at the row point x.
    """

    lattice: LatticeSpace
    sigma: np.ndarray
    U_coeffs: np.ndarray
    V_coeffs: np.ndarray
    truncation_order: int
    ref_length_nu: float
    site_mass_squared: Optional[np.ndarray] = None

    @property
    def dim(self):
        return self.lattice.dim

    @property
    def has_log(self):
        return bool(np.any(self.V_coeffs))

    def _series(self, coeffs, sigma):
        out = np.zeros_like(sigma)
        for n in range(self.truncation_order, -1, -1):
            out = out * sigma + coeffs[n]
        return out

    def U(self):
        return self._series(self.U_coeffs, self.sigma)

    def V(self):
        return self._series(self.V_coeffs, self.sigma)

    def values(self):
        """H off the diagonal; the diagonal is set to 0 (H is singular there)."""
        return evaluate_hadamard(self, self.sigma)

    def row_values(self):
        """
        H(x, y) with the coefficients taken at m^2(x), diagonal 0. Not
        symmetric for site-varying mass; its rows feed the coincidence fits.
        """
        m2 = self.site_mass_squared
        if m2 is None or np.all(m2 == m2[0]):
            return self.values()
        U, V = hadamard_coefficients(self.dim, np.asarray(m2)[:, None], self.truncation_order)
        return evaluate_hadamard(replace(self, U_coeffs=U, V_coeffs=V), self.sigma)

    def mass_rate(self, mass_squared_rate):
        """dH(x, y)/ds for m^2(x) moving at the given per-site rate, rows frozen at x."""
        if self.site_mass_squared is None:
            raise ValueError("Hadamard expansion carries no per-site mass")
        dU, dV = hadamard_mass_derivatives(
            self.dim, np.asarray(self.site_mass_squared)[:, None], self.truncation_order
        )
        rate = np.asarray(mass_squared_rate, dtype=float)[:, None]
        return evaluate_hadamard(replace(self, U_coeffs=dU * rate, V_coeffs=dV * rate), self.sigma)

    def coincidence_V(self):
        """[V](x) = V_0 on the diagonal."""
        V0 = self.V_coeffs[0]
        if np.ndim(V0) == 0:
            return np.full(self.lattice.site_count, float(V0))
        return np.diag(V0).copy()


def evaluate_hadamard(H: HadamardExpansion, sigma, dim=None):
    """H at arbitrary sigma samples (same shape as the stored coefficients allow)."""
    dim = H.dim if dim is None else dim
    sigma = np.asarray(sigma, dtype=float)
    off = sigma > 0
    safe = np.where(off, sigma, 1.0)

    U = H._series(H.U_coeffs, safe)
    V = H._series(H.V_coeffs, safe)
    power = (dim - 2) / 2.0
    values = U / safe ** power + V * np.log(safe / H.ref_length_nu ** 2)
    return np.where(off, values, 0.0)


def hadamard_kernel(geometry: BackgroundGeometry, lattice: LatticeSpace, order: int, nu: float) -> HadamardExpansion:
    if nu <= 0:
        raise ValueError(f"reference length must be positive, got {nu}")
    if order > settings.MAX_HADAMARD_ORDER:
        raise ValueError(
            f"Hadamard order {order} exceeds the configured maximum {settings.MAX_HADAMARD_ORDER}"
        )
    if geometry.conformal is not None and np.any(geometry.conformal != 1.0):
        raise ValueError("Hadamard expansion is only available on flat metrics (no conformal factor)")
    lattice_dim = lattice.dim
    if geometry.dim != lattice_dim:
        raise ValueError(f"geometry is {geometry.dim}-dimensional, lattice is {lattice_dim}-dimensional")

    N = lattice.site_count
    sigma = lattice.sigma_table()
    m2 = effective_mass_squared(geometry, N)

    if np.all(m2 == m2[0]):
        U, V = hadamard_coefficients(lattice_dim, float(m2[0]), order)
    else:
        # site-varying mass: coefficients at the midpoint value
        midpoint = 0.5 * (m2[:, None] + m2[None, :])
        U, V = hadamard_coefficients(lattice_dim, midpoint, order)

    logger.debug(f"Hadamard expansion: D={lattice_dim}, order={order}, nu={nu}")
    return HadamardExpansion(
        lattice=lattice,
        sigma=sigma,
        U_coeffs=U,
        V_coeffs=V,
        truncation_order=order,
        ref_length_nu=float(nu),
        site_mass_squared=m2,
    )
