import logging
from math import comb

import numpy as np

from background.family import SmoothFamily
from common import settings
from parametrix.hadamard import hadamard_kernel
from parametrix.smooth_part import smooth_part
from parametrix.transport import deformed_lattice, parametrix_transport, reference_green
from wick.powers import wick_power_value

logger = logging.getLogger(__name__)

CAUCHY_RATIO = 0.6


def family_wick_value(k, f, family: SmoothFamily, s, hadamard_order, nu, P=None, fit_order=2):
    """
    Phi^k[h_s](f, R_s P, 0), with P the exact Green kernel at s = 0 unless given.
    """
    geometry, lattice = deformed_lattice(family, s)
    if P is None:
        P = reference_green(family, 0.0, nu)
    P_s = parametrix_transport(P, family, s)
    H_s = hadamard_kernel(geometry, lattice, hadamard_order, nu)
    W_s = smooth_part(P_s, H_s, order=fit_order)
    return wick_power_value(k, f, W_s, np.zeros(lattice.site_count), lattice.volume_weight)


def central_difference(value_of, order, step, center=0.0):
    """order-th derivative by the symmetric stencil sum_i (-1)^i C(order, i) v(c + (order/2 - i) h) / h^order."""
    total = 0.0
    for i in range(order + 1):
        total += (-1) ** i * comb(order, i) * value_of(center + (order / 2.0 - i) * step)
    return total / step ** order


def finite_difference_smoothness(value_of, max_order=3, step=0.1, refinements=3, atol=1e-9):
    """
    Derivative estimates at s = 0 for orders 1..max_order on steps h, h/2, h/4, ..

    An order passes when successive estimates contract (Cauchy) or already agree to atol.
    """
    if max_order > settings.MAX_S_ORDER:
        raise ValueError(f"derivative order {max_order} exceeds the cap {settings.MAX_S_ORDER}")
    cache = {}

    def cached(s):
        key = round(s, 15)
        if key not in cache:
            cache[key] = value_of(s)
        return cache[key]

    steps = [step / 2 ** i for i in range(refinements)]
    report = {"steps": steps, "orders": {}, "passed": True}
    for order in range(1, max_order + 1):
        estimates = [central_difference(cached, order, h) for h in steps]
        gaps = np.abs(np.diff(estimates))
        scale = max(1.0, float(np.max(np.abs(estimates))))
        contracting = all(
            gaps[i + 1] <= CAUCHY_RATIO * gaps[i] or gaps[i + 1] <= atol * scale
            for i in range(len(gaps) - 1)
        )
        # Richardson for the O(h^2) central stencils
        extrapolated = estimates[-1] + (estimates[-1] - estimates[-2]) / 3.0 if len(estimates) > 1 else estimates[-1]
        report["orders"][order] = {
            "estimates": [float(np.real(e)) for e in estimates],
            "extrapolated": float(np.real(extrapolated)),
            "converged": bool(contracting),
        }
        if not contracting:
            logger.warning(f"order-{order} derivative estimates do not contract: {estimates}")
            report["passed"] = False
    return report


def smoothness_in_family_check(k, f, family: SmoothFamily, hadamard_order, nu, max_order=3, step=0.1,
                               refinements=3, P=None):
    """Parametric smoothness of s -> Phi^k[h_s](f, P_s, 0) by finite differences."""
    if P is None:
        P = reference_green(family, 0.0, nu)
    report = finite_difference_smoothness(
        lambda s: family_wick_value(k, f, family, s, hadamard_order, nu, P=P),
        max_order=max_order, step=step, refinements=refinements,
    )
    report["degree"] = k
    return report
