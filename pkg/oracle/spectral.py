import numpy as np

from background.family import SmoothFamily, family_operator_derivative
from parametrix.transport import reference_green


def spectral_perturbation(G, G1, cell_weight):
    """
    dG/ds = -G G^(1) G for the Green kernel G of E_s with dE/ds = G^(1);
    the cell weight converts kernels to operators (E G cw = Id).
    """
    G = np.asarray(G)
    dG = -cell_weight * G @ np.asarray(G1) @ G
    return 0.5 * (dG + dG.T)


def family_green_derivative(family: SmoothFamily, nu=None):
    """dG_s/ds at s = 0 along a smooth family, from the exact resolvent identity."""
    G = reference_green(family, 0.0, nu)
    G1 = family_operator_derivative(family, family.lattice, 1)
    return spectral_perturbation(G.kernel, G1, family.lattice.cell_weight)


def finite_difference_green(family: SmoothFamily, step=1e-4, nu=None):
    """Central difference of the exact Green kernel along the family."""
    plus = reference_green(family, step, nu).kernel
    minus = reference_green(family, -step, nu).kernel
    return (plus - minus) / (2.0 * step)
