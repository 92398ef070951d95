from dataclasses import dataclass
from typing import Dict

import numpy as np
import scipy.sparse as sp

from background.lattice import LatticeSpace
from common import settings


@dataclass(frozen=True)
class JetStencil:
    """
    Finite-difference weights mapping field samples along one axis to a jet component.

    `weights` maps lattice offsets to coefficients in units of a^-order.
    """

    order: int
    weights: Dict[int, float]

    def apply(self, lattice: LatticeSpace, axis) -> sp.csr_matrix:
        N = lattice.site_count
        a = lattice.spacing[axis]
        rows = np.arange(N)
        M = sp.csr_matrix((N, N))
        for offset, w in self.weights.items():
            if offset == 0:
                M = M + sp.identity(N, format="csr") * (w / a ** self.order)
                continue
            nb = lattice.neighbor(axis, offset)
            inside = nb >= 0
            M = M + sp.coo_matrix(
                (np.full(inside.sum(), w / a ** self.order), (rows[inside], nb[inside])),
                shape=(N, N),
            ).tocsr()
        return M


VALUE = JetStencil(order=0, weights={0: 1.0})
# reproduces d/dx exactly on polynomials of degree <= 2
CENTERED_FIRST = JetStencil(order=1, weights={1: 0.5, -1: -0.5})


def jet_component_count(dim, jet_order):
    if jet_order == 0:
        return 1
    if jet_order == 1:
        return 1 + dim
    raise ValueError(f"jet order {jet_order} is not supported")


def jet_operators(lattice: LatticeSpace, jet_order: int):
    """
    Sparse matrices J_0..J_{J-1} with (j phi)(x)_i = (J_i phi)(x).

    Component 0 is the field value, components 1..D the centered gradient.
    """
    if jet_order > settings.MAX_JET_ORDER:
        raise ValueError(
            f"jet order {jet_order} exceeds the configured maximum {settings.MAX_JET_ORDER}"
        )
    ops = [VALUE.apply(lattice, 0)]
    if jet_order >= 1:
        ops.extend(CENTERED_FIRST.apply(lattice, axis) for axis in range(lattice.dim))
    return ops


def jet_field(lattice: LatticeSpace, jet_order: int, phi):
    """(N, J) array of jet components of a field (or (B, N, J) for a batch)."""
    ops = jet_operators(lattice, jet_order)
    phi = np.asarray(phi)
    if phi.ndim == 1:
        return np.stack([J @ phi for J in ops], axis=-1)
    return np.stack([(J @ phi.T).T for J in ops], axis=-1)


def stencil_reproduces_derivative(stencil: JetStencil, degree: int) -> bool:
    """
    True when the stencil is exact at x = 0 for every monomial x^p, p <= degree
    (checked on a unit grid with integer arithmetic).
    """
    for p in range(degree + 1):
        approx = sum(w * float(offset) ** p for offset, w in stencil.weights.items())
        exact = float(np.prod(range(1, p + 1))) if p == stencil.order else 0.0
        if stencil.order == 0 and p == 0:
            exact = 1.0
        if not np.isclose(approx, exact, rtol=0, atol=1e-14):
            return False
    return True
