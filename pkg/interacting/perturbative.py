import logging
from itertools import product
from math import factorial

import numpy as np
from scipy import stats

from algebra.contraction import ContractionOperator, upsilon
from algebra.star_product import contraction_term, needs_extension, star_product
from background.family import SmoothFamily
from background.operator import elliptic_operator
from common.errors import ExtensionRequiredError
from functionals.polynomial import MIXED, PolynomialFunctional, pointwise_product, to_dense
from interacting.series import FormalSeries, check_series_order
from parametrix.green import Parametrix
from parametrix.transport import deformed_lattice

logger = logging.getLogger(__name__)

SYMMETRY_WARNING = 1e-10


def perturbative_parametrix(P: Parametrix, family: SmoothFamily, order) -> FormalSeries:
    """
    P_[[s]] = sum_n (-P G_s)^n P as an s-series of kernels, G_s = E_s - E:

        T_0 = P,   T_m = -sum_{p=1}^m P (cw E_p) T_{m-p}

    with E_p the Taylor coefficients of E_s.
    """
    check_series_order("s", order)
    P.lattice.check_compatible(family.lattice)
    cw = P.lattice.cell_weight
    steps = {p: cw * family.operator_taylor_coefficient(p) for p in range(1, order + 1)}

    terms = {0: P.kernel}
    for m in range(1, order + 1):
        T = np.zeros_like(P.kernel)
        for p in range(1, m + 1):
            if np.any(steps[p]):
                T = T - P.kernel @ steps[p] @ terms[m - p]
        asymmetry = float(np.abs(T - T.T).max())
        if asymmetry > SYMMETRY_WARNING * max(float(np.abs(T).max()), 1.0):
            logger.warning(f"order-{m} term of the perturbative parametrix is asymmetric by {asymmetry:.3e}")
        terms[m] = 0.5 * (T + T.T)
    return FormalSeries("s", terms, order)


def partial_sum(series: FormalSeries, s, order=None):
    order = series.order if order is None else order
    total = None
    for m in range(order + 1):
        T = series.coefficients.get(m)
        if T is None:
            continue
        total = s ** m * T if total is None else total + s ** m * T
    return total


def parametrix_residual(series: FormalSeries, family: SmoothFamily, s_values):
    """
    max |E_s P_[[s]]_{<=n} cw - Id| along s, with the log-log slope of the
    residual in s (n + 1 for an exact Green kernel at s = 0).
    """
    residuals = []
    for s in s_values:
        geometry, lattice = deformed_lattice(family, s)
        E_s = elliptic_operator(lattice, geometry)
        R = E_s @ partial_sum(series, s) * lattice.cell_weight - np.eye(lattice.site_count)
        residuals.append(float(np.abs(R).max()))
    residuals = np.asarray(residuals)
    slope = None
    if np.all(residuals > 0) and len(s_values) >= 2:
        slope = float(stats.linregress(np.log(np.abs(s_values)), np.log(residuals)).slope)
    return {"s": [float(s) for s in s_values], "residual": residuals.tolist(), "slope": slope}


# ------------------------------------------------------------
# beta_s = exp[Upsilon_{P_s - P}]
# ------------------------------------------------------------

# mass and gauge variations of the Hadamard singular part stay continuous at coincidence up to D = 3
CONTINUOUS_VARIATION_MAX_DIM = 3


def beta_map(F: PolynomialFunctional, series: FormalSeries) -> FormalSeries:
    """
    beta_s F = prod_{m>=1} exp[Upsilon_{s^m T_m}] F as an s-series, truncated
    at the order of the parametrix series.

    The T_m carry the variation of the singular part; they have coincidence
    values only for D <= 3, so local F of degree >= 2 in D >= 4 is refused.
    """
    order = series.order
    smooth = F.lattice.dim <= CONTINUOUS_VARIATION_MAX_DIM
    current = {0: F}
    for m in range(1, order + 1):
        T = series.coefficients.get(m)
        if T is None or not np.any(T):
            continue
        S = ContractionOperator(T, label=f"T_{m}", smooth=smooth)
        updated = {}
        for k, C in current.items():
            term, n = C, 0
            while k + m * n <= order:
                scaled = term.scaled(1.0 / factorial(n))
                target = k + m * n
                updated[target] = scaled if target not in updated else updated[target] + scaled
                if term.max_degree < 2:
                    break
                term = upsilon(S, term)
                n += 1
        current = updated
    return FormalSeries("s", current, order)


def _compositions(total, parts):
    """Ordered tuples of `parts` non-negative integers summing to `total`."""
    for combo in product(range(total + 1), repeat=parts):
        if sum(combo) == total:
            yield combo


def series_star_product(F: PolynomialFunctional, G: PolynomialFunctional, series: FormalSeries) -> FormalSeries:
    """
    F .P_[[s]] G: the s^l coefficient collects
    1/n! <F^(n), T_{m_1} (x) .. (x) T_{m_n} G^(n)> over m_1 + .. + m_n = l.
    """
    order = series.order
    lattice = F.lattice
    if needs_extension(F, G, ContractionOperator(series.coefficients[0], label="T_0", smooth=False)):
        raise ExtensionRequiredError("s-series products of overlapping local factors are not extended")
    mu = lattice.volume_weight
    weighted = {m: T * np.outer(mu, mu) for m, T in series.coefficients.items()}
    Fd, Gd = to_dense(F), to_dense(G)
    top = min(F.max_degree, G.max_degree)

    out = {0: pointwise_product(F, G)}
    for l in range(order + 1):
        kernels = {}
        for n in range(1, top + 1):
            for combo in _compositions(l, n):
                if any(m not in weighted for m in combo):
                    continue
                for degree, kernel in contraction_term(Fd, Gd, [weighted[m] for m in combo]).items():
                    kernels[degree] = kernels.get(degree, 0) + kernel / factorial(n)
        if kernels:
            correction = PolynomialFunctional(lattice, kernels, MIXED)
            out[l] = correction if l not in out else out[l] + correction
    return FormalSeries("s", out, order)


def series_product(A: FormalSeries, B: FormalSeries, series: FormalSeries) -> FormalSeries:
    """Product of two s-series of functionals under .P_[[s]]."""
    total = FormalSeries("s", {}, min(A.order, B.order, series.order))
    for i, F in A.coefficients.items():
        for j, G in B.coefficients.items():
            if i + j > total.order:
                continue
            total = total + series_star_product(F, G, series.truncate(total.order - i - j)).shifted(i + j)
    return total


def beta_homomorphism_residual(F: PolynomialFunctional, G: PolynomialFunctional, series: FormalSeries) -> float:
    """
    beta_s(F .P G) against beta_s F .P_[[s]] beta_s G, coefficientwise up to the
    series order.
    """
    P0 = ContractionOperator(series.coefficients[0], label="T_0", smooth=False)
    lhs = beta_map(star_product(F, G, P0), series)
    rhs = series_product(beta_map(F, series), beta_map(G, series), series)
    return lhs.max_abs_difference(rhs)
