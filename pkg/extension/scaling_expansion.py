import logging

import numpy as np
from scipy import stats

from common.errors import IllConditionedFitError

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12


def scaling_expansion_flat(radii, samples, order, exponent, fit_degree=None):
    """
    Split radial samples t(r) into s-Taylor coefficients of the dilation family
    t_s(y) = s^alpha t(s y):  tau_k(r) = c_k r^(k - alpha), plus the remainder r_m.

    r^alpha t(r) is fitted with a polynomial in r; tau_k take its first m + 1
    coefficients. Returns {"tau": [c_0..c_m], "remainder": r_m samples,
    "remainder_degree": fitted scaling degree of r_m (None when r_m vanishes)}.
    """
    radii = np.asarray(radii, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if np.any(radii <= 0):
        raise ValueError("radial samples must lie off the diagonal (r > 0)")
    degree = order + 4 if fit_degree is None else fit_degree
    if degree < order:
        raise ValueError(f"fit degree {degree} is below the expansion order {order}")
    if radii.size < degree + 2:
        raise IllConditionedFitError(
            f"{radii.size} radial samples cannot fix a degree-{degree} scaling expansion"
        )

    scale = radii.max()
    design = np.vander(radii / scale, degree + 1, increasing=True)
    condition = np.linalg.cond(design)
    if condition > MAX_CONDITION:
        raise IllConditionedFitError(f"scaling expansion fit condition number {condition:.3e}")

    coeffs, *_ = np.linalg.lstsq(design, radii ** exponent * samples, rcond=None)
    coeffs = coeffs / scale ** np.arange(degree + 1)
    tau = coeffs[: order + 1]

    leading = sum(c * radii ** (k - exponent) for k, c in enumerate(tau))
    remainder = samples - leading

    report = {"tau": tau, "remainder": remainder, "remainder_degree": None}
    magnitude = np.abs(remainder)
    if np.max(magnitude) <= 1e-12 * max(np.max(np.abs(samples)), 1.0):
        return report

    # fit on the inner half, where the leading remainder term dominates
    inner = (radii <= np.median(radii)) & (magnitude > 0)
    if inner.sum() < 3:
        logger.warning("too few nonzero remainder samples near the diagonal to fit its degree")
        return report
    fit = stats.linregress(np.log(radii[inner]), np.log(magnitude[inner]))
    report["remainder_degree"] = float(-fit.slope)
    return report
