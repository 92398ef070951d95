import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from background.geometry import BackgroundGeometry
from background.lattice import LatticeSpace
from common.errors import IllConditionedFitError
from parametrix.green import Parametrix, spectral_green_column
from parametrix.hadamard import (
    HadamardExpansion,
    effective_mass_squared,
    evaluate_hadamard,
    hadamard_coefficients,
)

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e10
DEFAULT_FIT_ORDER = 2


@dataclass(frozen=True, eq=False)
class SmoothPart:
    """
    W_P = P - H off the diagonal together with its coincidence limit [W_P].

    `kernel` holds the off-diagonal samples with the diagonal replaced by the
    coincidence values; it is None when only the coincidence was computed.
    """

    lattice: Optional[LatticeSpace]
    kernel: Optional[np.ndarray]
    coincidence: np.ndarray
    ref_length_nu: float
    fit_order: int = DEFAULT_FIT_ORDER
    fit_window: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not np.all(np.isfinite(self.coincidence)):
            raise ValueError("coincidence limit is not finite at every site")


def default_fit_window(extent, metric):
    """Shell window [L/8, L/4] in physical length, L the shortest physical box side."""
    physical = np.asarray(extent) * np.sqrt(np.diag(metric))
    r_min = physical.min() / 8.0
    return r_min, 2.0 * r_min


def fit_coincidence(sigma, values, order=DEFAULT_FIT_ORDER):
    """
    Value at sigma = 0 of the least-squares polynomial in sigma through (sigma, values).
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size < order + 2:
        raise IllConditionedFitError(
            f"{sigma.size} samples cannot fix an order-{order} coincidence fit; refine the lattice"
        )
    scale = sigma.max()
    design = np.vander(sigma / scale, order + 1, increasing=True)
    condition = np.linalg.cond(design)
    if condition > MAX_CONDITION:
        raise IllConditionedFitError(
            f"coincidence fit condition number {condition:.3e} exceeds {MAX_CONDITION:.0e}; refine the lattice"
        )
    coeffs, *_ = np.linalg.lstsq(design, np.asarray(values), rcond=None)
    return float(coeffs[0])


def extrapolate_coincidence(sigma, kernel, window, order=DEFAULT_FIT_ORDER):
    """Per-site coincidence value of a kernel from its samples in the shell window r_min <= r <= r_max."""
    r_min, r_max = window
    r = np.sqrt(2.0 * sigma)
    in_window = (r >= r_min) & (r <= r_max)
    out = np.empty(kernel.shape[0])
    for x in range(kernel.shape[0]):
        mask = in_window[x]
        out[x] = fit_coincidence(sigma[x, mask], kernel[x, mask], order)
    return out


def smooth_part(P: Parametrix, H: HadamardExpansion, order=DEFAULT_FIT_ORDER, window=None) -> SmoothPart:
    lattice = P.lattice
    lattice.check_compatible(H.lattice)
    if not np.isclose(P.ref_length_nu, H.ref_length_nu, rtol=1e-14, atol=0):
        raise ValueError(
            f"reference lengths differ: parametrix nu={P.ref_length_nu}, Hadamard nu={H.ref_length_nu}"
        )

    r_min, r_max = default_fit_window(lattice.extent, lattice.metric) if window is None else window

    # smooth shifts have an exact coincidence limit, only the base kernel is fitted
    shift = P.smooth_shift
    base = P.kernel if shift is None else P.kernel - shift

    # coincidences are fitted along rows with H frozen at the row point
    W = base - H.values()
    coincidence = extrapolate_coincidence(H.sigma, base - H.row_values(), (r_min, r_max), order)

    if shift is not None:
        W = W + shift
        coincidence = coincidence + np.diag(shift)

    W_tilde = W.copy()
    np.fill_diagonal(W_tilde, coincidence)
    W_tilde = 0.5 * (W_tilde + W_tilde.T)

    logger.debug(f"smooth part: window [{r_min:.4g}, {r_max:.4g}], order {order}")
    return SmoothPart(
        lattice=lattice,
        kernel=W_tilde,
        coincidence=coincidence,
        ref_length_nu=H.ref_length_nu,
        fit_order=order,
        fit_window=(r_min, r_max),
    )


def homogeneous_coincidence(geometry: BackgroundGeometry, sites_per_axis, hadamard_order, nu,
                            order=DEFAULT_FIT_ORDER, window=None):
    """
    [W_G] of the exact Green kernel on a homogeneous torus from a single FFT column.

    Returns (coincidence, G(0, 0)).
    """
    column = spectral_green_column(geometry, sites_per_axis)
    n = sites_per_axis
    D = geometry.dim
    spacing = np.asarray(geometry.extent) / n

    rel = np.indices((n,) * D).reshape(D, -1).T
    rel = np.where(rel > n // 2, rel - n, rel) * spacing
    sigma = 0.5 * np.einsum("ni,ij,nj->n", rel, geometry.metric, rel)

    m2 = float(effective_mass_squared(geometry, 1)[0])
    U, V = hadamard_coefficients(D, m2, hadamard_order)
    H = HadamardExpansion(
        lattice=None, sigma=sigma, U_coeffs=U, V_coeffs=V,
        truncation_order=hadamard_order, ref_length_nu=float(nu),
    )
    H_values = evaluate_hadamard(H, sigma, dim=D)

    r_min, r_max = default_fit_window(geometry.extent, geometry.metric) if window is None else window
    r = np.sqrt(2.0 * sigma)
    mask = (r >= r_min) & (r <= r_max)
    values = column.ravel() - H_values
    return fit_coincidence(sigma[mask], values[mask], order), float(column.ravel()[0])


def shift_reference_length(W: SmoothPart, H: HadamardExpansion, nu_new) -> SmoothPart:
    """W' = W + V log(nu'^2 / nu^2) when the Hadamard reference length changes."""
    if nu_new <= 0:
        raise ValueError(f"reference length must be positive, got {nu_new}")
    log_ratio = np.log(nu_new ** 2 / W.ref_length_nu ** 2)

    kernel = None
    if W.kernel is not None:
        V = H.V()
        kernel = W.kernel + V * log_ratio
        np.fill_diagonal(kernel, W.coincidence + H.coincidence_V() * log_ratio)
    coincidence = W.coincidence + H.coincidence_V() * log_ratio
    return replace(W, kernel=kernel, coincidence=coincidence, ref_length_nu=float(nu_new))
