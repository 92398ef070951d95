import logging
from math import comb

import numpy as np

from background.family import SmoothFamily, stencil_neighborhood
from interacting.perturbative import perturbative_parametrix
from oracle.spectral import family_green_derivative
from parametrix.hadamard import hadamard_kernel
from parametrix.smooth_part import DEFAULT_FIT_ORDER, default_fit_window, extrapolate_coincidence, smooth_part
from parametrix.transport import deformed_lattice, parametrix_transport, reference_green
from wick.powers import check_wick_degree, wick_polynomial

logger = logging.getLogger(__name__)


def _hadamard_values(family, s, order, nu):
    geometry, lattice = deformed_lattice(family, s)
    return hadamard_kernel(geometry, lattice, order, nu)


def _richardson_derivative(value_of, step):
    """Central difference at s = 0 with one Richardson step, O(step^4)."""
    coarse = (value_of(step) - value_of(-step)) / (2.0 * step)
    fine = (value_of(step / 2.0) - value_of(-step / 2.0)) / step
    return (4.0 * fine - coarse) / 3.0


def ppa_check(k, f, family: SmoothFamily, hadamard_order, nu=None, step=1e-3, phi=None,
              fit_order=DEFAULT_FIT_ORDER, window=None):
    """
    Principle of perturbative agreement for Phi^k along a compactly supported
    family: the s-derivative of the transported Wick power against the order-s
    term of beta_s. The residual density r(x) only sees the Hadamard part of
    the deformation at the row point x, so it vanishes off the support and
    its one-link neighborhood.

    The oracle takes dG/ds from the resolvent identity and dH/ds from the
    m^2-derivatives of the Hadamard coefficients.
    """
    check_wick_degree(k)
    if family.conformal_terms:
        logger.warning("metric-varying family: needs a curved Hadamard expansion")
        raise ValueError("perturbative agreement is checked for mass and gauge variations only")

    P = reference_green(family, 0.0, nu)
    nu = P.ref_length_nu
    lattice = family.lattice
    window = default_fit_window(lattice.extent, lattice.metric) if window is None else window
    H0 = _hadamard_values(family, 0.0, hadamard_order, nu)
    sigma = H0.sigma

    def coincidence_at(s):
        P_s = parametrix_transport(P, family, s)
        return smooth_part(P_s, _hadamard_values(family, s, hadamard_order, nu), fit_order, window).coincidence

    W0 = smooth_part(P, H0, fit_order, window)
    transported_rate = _richardson_derivative(coincidence_at, step)

    T1 = perturbative_parametrix(P, family, 1).coefficients[1]
    beta_density = extrapolate_coincidence(sigma, T1, window, fit_order)
    residual = transported_rate - beta_density

    dG = family_green_derivative(family, nu)
    dH = H0.mass_rate(family.mass_squared_rate())
    oracle = extrapolate_coincidence(sigma, dG - dH, window, fit_order) - beta_density

    outside = ~stencil_neighborhood(lattice, family.support_mask, 1)

    phi = np.zeros(lattice.site_count) if phi is None else np.asarray(phi)
    mu = lattice.volume_weight
    if k >= 2:
        weight = comb(k, 2) * wick_polynomial(k - 2, phi, W0.coincidence)
        integrated = float(np.sum(np.asarray(f) * mu * weight * residual))
    else:
        integrated = 0.0

    report = {
        "k": k,
        "residual_density": residual.tolist(),
        "integrated_residual": integrated,
        "max_outside_support": float(np.abs(residual[outside]).max(initial=0.0)),
        "oracle_outside_support": float(np.abs(oracle[outside]).max(initial=0.0)),
        "oracle_difference": float(np.abs(residual - oracle).max()),
        "outside_sites": int(outside.sum()),
        "fit_radius": float(window[1]),
    }
    logger.debug(
        f"PPA k={k}: outside {report['max_outside_support']:.3e}, oracle gap {report['oracle_difference']:.3e}"
    )
    return report
