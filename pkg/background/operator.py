import logging

import numpy as np
import scipy.sparse as sp

from background.geometry import BackgroundGeometry
from background.lattice import LatticeSpace

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-14


def difference_matrix(lattice: LatticeSpace, axis):
    """Forward (link) difference (phi(x+e) - phi(x)) / a along one axis."""
    N = lattice.site_count
    a = lattice.spacing[axis]
    nb = lattice.neighbor(axis)
    rows = np.arange(N)
    inside = nb >= 0

    D = sp.coo_matrix(
        (np.full(inside.sum(), 1.0 / a), (rows[inside], nb[inside])), shape=(N, N)
    ).tocsr()
    return D - sp.identity(N, format="csr") / a


def average_matrix(lattice: LatticeSpace, axis):
    """Link average (phi(x+e) + phi(x)) / 2."""
    N = lattice.site_count
    nb = lattice.neighbor(axis)
    rows = np.arange(N)
    inside = nb >= 0

    M = sp.coo_matrix(
        (np.full(inside.sum(), 0.5), (rows[inside], nb[inside])), shape=(N, N)
    ).tocsr()
    return M + 0.5 * sp.identity(N, format="csr")


def link_operators(lattice: LatticeSpace, A_field):
    """L_k = D_k + A_k * avg_k, the discretization of (nabla_k + A_k)."""
    ops = []
    for axis in range(lattice.dim):
        L = difference_matrix(lattice, axis)
        if np.any(A_field[:, axis] != 0.0):
            L = L + sp.diags(A_field[:, axis]) @ average_matrix(lattice, axis)
        ops.append(L.tocsr())
    return ops


def _assemble(lattice, link_ops, kinetic_weight, mass_weight, inverse_metric):
    N = lattice.site_count
    A = sp.diags(mass_weight).tocsr()
    for j in range(lattice.dim):
        for k in range(lattice.dim):
            gjk = inverse_metric[j, k]
            if gjk == 0.0:
                continue
            A = A + link_ops[j].T @ sp.diags(gjk * kinetic_weight) @ link_ops[k]
    return A


def form_matrix(lattice: LatticeSpace, geometry: BackgroundGeometry):
    """
    Hessian of the lattice action
        S(phi) = 1/2 sum_x mu(x) [ g^{jk}(x) (L_j phi)(L_k phi) + c(x) phi^2 ].
    """
    N = lattice.site_count
    omega = geometry.conformal_field(N)
    D = lattice.dim

    base = float(np.prod(lattice.spacing) * np.sqrt(np.linalg.det(geometry.metric)))
    kinetic_weight = base * omega ** (D / 2.0 - 1.0)
    mass_weight = base * omega ** (D / 2.0) * geometry.c_field(N)

    link_ops = link_operators(lattice, geometry.A_field(N))
    inverse_metric = np.linalg.inv(geometry.metric)
    return _assemble(lattice, link_ops, kinetic_weight, mass_weight, inverse_metric)


def elliptic_operator(lattice: LatticeSpace, geometry: BackgroundGeometry) -> np.ndarray:
    """
    Discretized E = -(nabla_j - A_j) g^{jk} (nabla_k + A_k) + c as a dense symmetric matrix.

    E is the action Hessian divided by the cell weight of the lattice, so that
    E K mu = Id for the Green kernel K.
    """
    if geometry.dim != lattice.dim:
        raise ValueError(f"geometry is {geometry.dim}-dimensional, lattice is {lattice.dim}-dimensional")

    E = form_matrix(lattice, geometry).toarray() / lattice.cell_weight

    asymmetry = np.abs(E - E.T).max()
    scale = max(np.abs(E).max(), 1.0)
    assert asymmetry <= SYMMETRY_TOLERANCE * scale * 10, (
        f"non-symmetric discretization detected: |E - E^T| = {asymmetry:.3e}"
    )
    E = 0.5 * (E + E.T)

    c = geometry.c_field(lattice.site_count)
    if not np.any(geometry.A_field(lattice.site_count)) and np.max(c) <= 0.0:
        logger.warning("c <= 0 everywhere with A = 0: E has a nonempty kernel in the continuum")

    return E


def lattice_action(lattice: LatticeSpace, geometry: BackgroundGeometry, phi):
    """Value of the quadratic lattice action at a real field configuration."""
    A = form_matrix(lattice, geometry)
    phi = np.asarray(phi, dtype=float)
    return 0.5 * float(phi @ (A @ phi))


def plane_wave_symbol(geometry: BackgroundGeometry, sites_per_axis: int):
    """
    Eigenvalue array of E on a homogeneous torus, shape (n,)*D, in FFT order.

    Uses the symbol of L_k:
        l_k(p) = (e^{i p a} - 1)/a + A_k (e^{i p a} + 1)/2,
        E(p)   = sum_{jk} g^{jk} conj(l_j) l_k + c.
    """
    if not geometry.periodic or not geometry.is_homogeneous:
        raise ValueError("plane-wave symbol needs a homogeneous torus background")

    n = sites_per_axis
    spacing = [L / n for L in geometry.extent]
    ginv = np.linalg.inv(geometry.metric)
    A = geometry.covector_A
    c = float(geometry.scalar_c)

    grids = np.meshgrid(*[2 * np.pi * np.fft.fftfreq(n, d=a) for a in spacing], indexing="ij")
    symbols = []
    for axis, p in enumerate(grids):
        a = spacing[axis]
        phase = np.exp(1j * p * a)
        symbols.append((phase - 1.0) / a + A[axis] * (phase + 1.0) / 2.0)

    spectrum = np.full(grids[0].shape, c, dtype=complex)
    for j in range(geometry.dim):
        for k in range(geometry.dim):
            if ginv[j, k] != 0.0:
                spectrum += ginv[j, k] * np.conj(symbols[j]) * symbols[k]
    return spectrum.real


def plane_wave_spectrum(lattice: LatticeSpace, geometry: BackgroundGeometry):
    """Sorted eigenvalues of E on the torus, from the plane-wave symbol."""
    return np.sort(plane_wave_symbol(geometry, lattice.sites_per_axis).ravel())
