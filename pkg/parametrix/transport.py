import logging
from dataclasses import replace

import numpy as np

from background.family import SmoothFamily
from background.lattice import build_lattice
from background.operator import elliptic_operator
from parametrix.green import Parametrix, defect, exact_green

logger = logging.getLogger(__name__)

EXACT_DEFECT_TOLERANCE = 1e-9


def deformed_lattice(family: SmoothFamily, s):
    """Lattice of h_s with the same site layout as the family's base lattice."""
    geometry = family.geometry_at(s)
    return geometry, build_lattice(geometry, family.lattice.sites_per_axis)


def reference_green(family: SmoothFamily, s, ref_length_nu=None) -> Parametrix:
    geometry, lattice = deformed_lattice(family, s)
    E_s = elliptic_operator(lattice, geometry)
    return exact_green(E_s, lattice, ref_length_nu)


def parametrix_transport(P: Parametrix, family: SmoothFamily, s, reference=None, reference_s=None) -> Parametrix:
    """
    R_s P = P_hat_s + (P - P_hat), with exact Green kernels as reference parametrices
    unless others are supplied. The result counts as an exact Green kernel when
    it inverts E_s to EXACT_DEFECT_TOLERANCE.
    """
    P.lattice.check_compatible(family.lattice)
    if s == 0:
        return P

    P_hat = reference if reference is not None else reference_green(family, 0.0, P.ref_length_nu)
    P_hat_s = reference_s if reference_s is not None else reference_green(family, s, P.ref_length_nu)

    difference = P.kernel - P_hat.kernel
    shift = None if not np.any(difference) else 0.5 * (difference + difference.T)
    moved = replace(
        P_hat_s,
        kernel=P_hat_s.kernel + difference,
        is_exact_green=False,
        label=f"R_s({P.label})",
        smooth_shift=shift,
    )

    geometry, lattice = deformed_lattice(family, s)
    residual = float(np.abs(defect(elliptic_operator(lattice, geometry), moved)).max())
    logger.debug(f"transported parametrix to s={s}, defect {residual:.3e}")
    return replace(moved, is_exact_green=bool(residual <= EXACT_DEFECT_TOLERANCE))
