from dataclasses import dataclass, field
from itertools import product
from math import factorial
from typing import Dict, Tuple

import numpy as np
from scipy import integrate

from extension.radial import RadialKernel, angular_moment


def monomial_values(y, beta):
    """prod_i y_i^beta_i for points y of shape (P, n)."""
    out = np.ones(y.shape[0])
    for axis, power in enumerate(beta):
        if power:
            out = out * y[:, axis] ** power
    return out


def polynomial_values(y, coefficients):
    total = np.zeros(y.shape[0])
    for beta, c in coefficients.items():
        total = total + c * monomial_values(y, beta)
    return total


def _multiply(p, q, max_degree):
    out = {}
    for a, ca in p.items():
        for b, cb in q.items():
            beta = tuple(i + j for i, j in zip(a, b))
            if sum(beta) <= max_degree:
                out[beta] = out.get(beta, 0.0) + ca * cb
    return out


def multi_indices(dim, max_degree):
    return [beta for beta in product(range(max_degree + 1), repeat=dim) if sum(beta) <= max_degree]


@dataclass(frozen=True)
class PolynomialGaussian:
    """Discrete test function f(y) = p(y) exp(-|y|^2 / 2 w^2) on the relative coordinate."""

    dim: int
    polynomial: Dict[Tuple[int, ...], float] = field(default_factory=dict)
    width: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"Gaussian width must be positive, got {self.width}")
        poly = dict(self.polynomial) or {(0,) * self.dim: 1.0}
        for beta in poly:
            if len(beta) != self.dim:
                raise ValueError(f"multi-index {beta} does not match dimension {self.dim}")
        object.__setattr__(self, "polynomial", poly)

    def __call__(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        r2 = np.sum(y * y, axis=1)
        return polynomial_values(y, self.polynomial) * np.exp(-r2 / (2.0 * self.width ** 2))

    def taylor(self, order):
        """Coefficients d^beta f(0) / beta! for |beta| <= order."""
        if order < 0:
            return {}
        gauss = {}
        a = -1.0 / (2.0 * self.width ** 2)
        for beta in multi_indices(self.dim, order):
            if any(b % 2 for b in beta):
                continue
            half = [b // 2 for b in beta]
            n = sum(half)
            # (sum y_i^2)^n / n! picks multinomial n! / prod half_i!
            gauss[beta] = a ** n / float(np.prod([factorial(h) for h in half]))
        return _multiply(self.polynomial, gauss, order)

    def rotated(self, permutation, signs):
        """g(y) = f(R y) for the signed axis permutation (R y)_i = s_i y_{perm_i}."""
        poly = {}
        for beta, c in self.polynomial.items():
            new_beta = [0] * self.dim
            sign = 1.0
            for i, b in enumerate(beta):
                new_beta[permutation[i]] += b
                sign *= signs[i] ** b
            key = tuple(new_beta)
            poly[key] = poly.get(key, 0.0) + sign * c
        return PolynomialGaussian(self.dim, poly, self.width)


def radial_quadrature(kernel: RadialKernel, f: PolynomialGaussian):
    """
    Integral of u(|y|) f(y) over R^n for an integrable kernel: angular moments of
    the monomials times adaptive quadrature of the radial profile.
    """
    n = kernel.ambient_dim
    if f.dim != n:
        raise ValueError(f"test function has dimension {f.dim}, kernel acts in {n}")
    if kernel.exponent >= n:
        raise ValueError("radial quadrature needs an integrable kernel (sd < nD)")

    total = 0.0
    for beta, c in f.polynomial.items():
        angular = angular_moment(beta)
        if angular == 0.0:
            continue
        degree = sum(beta)

        def radial(r, degree=degree):
            return r ** (n - 1 + degree) * float(kernel(r)) * np.exp(-r * r / (2.0 * f.width ** 2))

        inner, _ = integrate.quad(radial, 0.0, f.width, limit=200, epsabs=1e-14, epsrel=1e-12)
        outer, _ = integrate.quad(radial, f.width, np.inf, limit=200, epsabs=1e-14, epsrel=1e-12)
        total += c * angular * (inner + outer)
    return total
