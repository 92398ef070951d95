import logging
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Dict

import numpy as np

from algebra.star_product import star_product
from common.errors import DegreeCapError
from common.settings import MAX_LAMBDA_ORDER, MAX_S_ORDER
from functionals.polynomial import PolynomialFunctional, evaluate, max_abs_difference, unit

logger = logging.getLogger(__name__)

ORDER_CAPS = {"lambda": MAX_LAMBDA_ORDER, "s": MAX_S_ORDER}


def check_series_order(variable, order):
    cap = ORDER_CAPS.get(variable)
    if order < 0:
        raise ValueError(f"truncation order must be >= 0, got {order}")
    if cap is not None and order > cap:
        raise DegreeCapError(f"{variable}-order {order} exceeds the cap {cap}")


@dataclass(frozen=True, eq=False)
class FormalSeries:
    """
    Truncated power series sum_n x^n a_n in one formal variable ("lambda" or "s").

    Coefficients are PolynomialFunctionals or kernel matrices; a missing
    coefficient up to `order` is zero, anything above `order` is unknown.
    """

    variable: str
    coefficients: Dict[int, object] = field(default_factory=dict)
    order: int = 0

    def __post_init__(self):
        check_series_order(self.variable, self.order)
        kept = {n: c for n, c in self.coefficients.items() if 0 <= n <= self.order}
        if len(kept) != len(self.coefficients):
            dropped = sorted(set(self.coefficients) - set(kept))
            logger.debug(f"{self.variable}-series truncated at order {self.order}, dropped {dropped}")
        object.__setattr__(self, "coefficients", kept)

    def __getitem__(self, n):
        if n > self.order:
            raise IndexError(f"coefficient {n} lies beyond the truncation order {self.order}")
        return self.coefficients.get(n)

    def _check_variable(self, other):
        if other.variable != self.variable:
            raise ValueError(f"cannot combine a {self.variable}-series with a {other.variable}-series")

    def truncate(self, order):
        return FormalSeries(self.variable, dict(self.coefficients), min(order, self.order))

    def map(self, fn: Callable) -> "FormalSeries":
        return FormalSeries(self.variable, {n: fn(c) for n, c in self.coefficients.items()}, self.order)

    def scaled(self, factor):
        return self.map(lambda c: c * factor if not isinstance(c, PolynomialFunctional) else c.scaled(factor))

    def shifted(self, power):
        """x^power times the series."""
        return FormalSeries(self.variable, {n + power: c for n, c in self.coefficients.items()}, self.order + power)

    def __add__(self, other):
        self._check_variable(other)
        order = min(self.order, other.order)
        out = {}
        for n in range(order + 1):
            a, b = self.coefficients.get(n), other.coefficients.get(n)
            if a is None and b is None:
                continue
            out[n] = b if a is None else a if b is None else a + b
        return FormalSeries(self.variable, out, order)

    def __neg__(self):
        return self.scaled(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def product(self, other, multiply: Callable) -> "FormalSeries":
        """Cauchy product with a bilinear coefficient product."""
        self._check_variable(other)
        order = min(self.order, other.order)
        out = {}
        for i, a in self.coefficients.items():
            for j, b in other.coefficients.items():
                if i + j > order:
                    continue
                term = multiply(a, b)
                out[i + j] = term if i + j not in out else out[i + j] + term
        return FormalSeries(self.variable, out, order)

    def inverse(self, multiply: Callable, one) -> "FormalSeries":
        """
        Inverse for a product with unit leading coefficient:
        b_0 = 1, b_n = -sum_{j=1}^n a_j b_{n-j}.
        """
        a0 = self.coefficients.get(0)
        if a0 is None or not _is_unit(a0, one):
            raise ValueError("only series with unit leading coefficient are inverted")
        inverse = {0: one}
        for n in range(1, self.order + 1):
            total = None
            for j in range(1, n + 1):
                a = self.coefficients.get(j)
                if a is None:
                    continue
                term = multiply(a, inverse[n - j])
                total = term if total is None else total + term
            if total is not None:
                inverse[n] = -total
        return FormalSeries(self.variable, inverse, self.order)

    def evaluate(self, phi):
        """Coefficient values at a field configuration, for functional coefficients."""
        return {n: evaluate(c, phi) for n, c in sorted(self.coefficients.items())}

    def max_abs_difference(self, other):
        self._check_variable(other)
        worst = 0.0
        for n in range(min(self.order, other.order) + 1):
            a, b = self.coefficients.get(n), other.coefficients.get(n)
            if a is None and b is None:
                continue
            if isinstance(a if a is not None else b, PolynomialFunctional):
                zero = (a if a is not None else b).scaled(0.0)
                diff = max_abs_difference(a if a is not None else zero, b if b is not None else zero)
            else:
                diff = float(np.max(np.abs(np.asarray(a if a is not None else 0.0) - np.asarray(b if b is not None else 0.0))))
            worst = max(worst, diff)
        return worst


def _is_unit(value, unit):
    if isinstance(unit, PolynomialFunctional):
        return max_abs_difference(value, unit) == 0.0
    return np.array_equal(np.asarray(value), np.asarray(unit))


def star_multiplier(P, extension=None):
    """
    Product under P for FormalSeries.product. A Parametrix contracts as a
    singular kernel: overlapping local factors take P^n(x, x) from `extension`.
    """
    return lambda F, G: star_product(F, G, P, extension)


def exp_series(F: PolynomialFunctional, P, order, variable="lambda", extension=None) -> FormalSeries:
    """exp_.P(x F) = sum_n x^n F^{.P n} / n!."""
    check_series_order(variable, order)
    coefficients = {}
    power = None
    for n in range(order + 1):
        power = unit(F.lattice) if n == 0 else star_product(power, F, P, extension)
        coefficients[n] = power.scaled(1.0 / factorial(n))
    return FormalSeries(variable, coefficients, order)
