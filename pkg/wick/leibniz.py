import logging

import numpy as np

from background.lattice import LatticeSpace
from background.operator import difference_matrix
from functionals.jets import jet_component_count, jet_operators
from functionals.polynomial import directional_derivative
from parametrix.smooth_part import SmoothPart
from wick.powers import wick_power

logger = logging.getLogger(__name__)


def gradient(lattice: LatticeSpace, phi):
    """Forward link gradient, shape (N, D)."""
    return np.stack([difference_matrix(lattice, axis) @ phi for axis in range(lattice.dim)], axis=1)


def divergence(lattice: LatticeSpace, V):
    """
    Minus the mu-adjoint of `gradient`: sum_x mu (div V) psi = -sum_x mu V . grad psi.
    """
    mu = lattice.volume_weight
    out = np.zeros(lattice.site_count, dtype=np.result_type(V.dtype, np.float64))
    for axis in range(lattice.dim):
        D = difference_matrix(lattice, axis)
        out = out - (D.T @ (mu * V[:, axis])) / mu
    return out


def jet_divergence(lattice: LatticeSpace, V):
    """Minus the mu-adjoint of the centered jet gradient (jet components 1..D)."""
    mu = lattice.volume_weight
    out = np.zeros(lattice.site_count, dtype=np.result_type(V.dtype, np.float64))
    for axis, J in enumerate(jet_operators(lattice, 1)[1:]):
        out = out - (J.T @ (mu * V[:, axis])) / mu
    return out


def leibniz_check(k, f, X, W: SmoothPart, phi, jet_order=1, stencil="centered"):
    """
    |:Phi^k:(-div(f X))(phi) - :Phi^k:(g)(phi)|, g the jet-valued smearing
    of order `jet_order` carrying k f X on its gradient slots.

    stencil="forward" compares against <:Phi^k:(f)^(1)[phi], X . grad phi>
    with forward differences instead; its k >= 2 defect is O(a) where the
    centered one is O(a^2). Both are exact for k = 1.
    """
    lattice = W.lattice
    X = np.asarray(X, dtype=float)
    if X.shape != (lattice.site_count, lattice.dim):
        raise ValueError(f"vector field must have shape ({lattice.site_count}, {lattice.dim}), got {X.shape}")
    if stencil not in ("centered", "forward"):
        raise ValueError(f"unknown Leibniz stencil {stencil!r}")
    if not np.any(X):
        return 0.0
    if jet_order < 1:
        raise ValueError("a jet order 0 smearing has no gradient slots for X")

    phi = np.asarray(phi, dtype=float)
    f = np.asarray(f)
    if stencil == "forward":
        lhs = wick_power(k, -divergence(lattice, f[:, None] * X), W, phi=phi)
        direction = np.einsum("xi,xi->x", X, gradient(lattice, phi))
        rhs = directional_derivative(wick_power(k, f, W), phi, [direction])
        return abs(lhs - rhs)

    lhs = wick_power(k, -jet_divergence(lattice, f[:, None] * X), W, phi=phi)
    g = np.zeros((lattice.site_count, jet_component_count(lattice.dim, jet_order)), dtype=np.result_type(f, X))
    g[:, 1:1 + lattice.dim] = k * f[:, None] * X
    rhs = wick_power(k, g, W, phi=phi, jet_order=jet_order)
    return abs(lhs - rhs)
