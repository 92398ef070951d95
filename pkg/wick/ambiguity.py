import logging
from dataclasses import dataclass, field
from math import comb
from typing import Dict

import numpy as np

from background.geometry import BackgroundGeometry
from background.lattice import LatticeSpace
from functionals.polynomial import PolynomialFunctional, evaluate
from parametrix.smooth_part import SmoothPart
from wick.powers import check_wick_degree, wick_power

logger = logging.getLogger(__name__)

AMBIGUITY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class AmbiguityCoefficients:
    """
    c_j for j >= 2, each a per-site scalar field (N,); missing j are zero.

    c_0 = 1 and c_1 = 0 are implied, which makes redefinitions compose by
    binomial convolution.
    """

    site_count: int
    coefficients: Dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        cleaned = {}
        for j, values in self.coefficients.items():
            if j < 2:
                raise ValueError(f"ambiguity coefficients start at j = 2, got j = {j}")
            values = np.asarray(values)
            if values.ndim == 0:
                values = np.full(self.site_count, values.item())
            if values.shape != (self.site_count,):
                raise ValueError(
                    f"c_{j} must be a scalar or a per-site field of shape ({self.site_count},), got {values.shape}"
                )
            cleaned[j] = values
        object.__setattr__(self, "coefficients", cleaned)

    def __call__(self, j):
        if j == 0:
            return np.ones(self.site_count)
        return self.coefficients.get(j, np.zeros(self.site_count))

    @property
    def max_order(self):
        return max(self.coefficients, default=0)

    def is_zero(self, atol=0.0):
        return all(np.max(np.abs(c)) <= atol for c in self.coefficients.values())

    def compose(self, other: "AmbiguityCoefficients") -> "AmbiguityCoefficients":
        """Coefficients of redefining by self, then by other: c''_l = sum_p C(l, p) c_p c'_(l-p)."""
        if other.site_count != self.site_count:
            raise ValueError("ambiguity coefficients live on different lattices")
        top = self.max_order + other.max_order
        combined = {}
        for l in range(2, top + 1):
            total = sum(comb(l, p) * self(p) * other(l - p) for p in range(l + 1))
            if np.any(total):
                combined[l] = total
        return AmbiguityCoefficients(self.site_count, combined)

    @classmethod
    def zero(cls, site_count):
        return cls(site_count, {})

    @classmethod
    def mass_polynomial(cls, geometry: BackgroundGeometry, site_count, betas):
        """
        Admissible class on flat backgrounds: c_j = beta_j (m^2)^(j(D-2)/4) when the
        exponent is a non-negative integer, otherwise 0.
        """
        D = geometry.dim
        m2 = geometry.c_field(site_count)
        coefficients = {}
        for j, beta in betas.items():
            numerator = j * (D - 2)
            if numerator % 4 != 0:
                logger.info(f"c_{j} has no polynomial m^2 form in D = {D}; set to 0")
                continue
            coefficients[j] = beta * m2 ** (numerator // 4)
        return cls(site_count, coefficients)


# ------------------------------------------------------------
# Wick families
# ------------------------------------------------------------

class WickFamily:
    """k, f -> Phi^k(f) as local functionals; the base class is the Hadamard prescription."""

    def __init__(self, W: SmoothPart, lattice: LatticeSpace = None):
        self.smooth_part = W
        self.lattice = lattice if lattice is not None else W.lattice

    def power(self, k, f) -> PolynomialFunctional:
        return wick_power(k, f, self.smooth_part, lattice=self.lattice)

    def value(self, k, f, phi):
        return evaluate(self.power(k, f), phi)


class RedefinedWickFamily(WickFamily):
    """Phi^k(f) + sum_{j<=k-2} C(k, j) Phi^j(c_(k-j) f)."""

    def __init__(self, base: WickFamily, coefficients: AmbiguityCoefficients):
        if coefficients.site_count != base.lattice.site_count:
            raise ValueError("ambiguity coefficients and Wick family live on different lattices")
        self.base = base
        self.coefficients = coefficients
        self.lattice = base.lattice

    def power(self, k, f) -> PolynomialFunctional:
        check_wick_degree(k)
        f = np.asarray(f)
        out = self.base.power(k, f)
        for j in range(k - 1):
            c = self.coefficients(k - j)
            if not np.any(c):
                continue
            out = out + self.base.power(j, c * f).scaled(comb(k, j))
        return out


def redefine_wick(powers: WickFamily, coefficients: AmbiguityCoefficients) -> WickFamily:
    if isinstance(powers, RedefinedWickFamily):
        return RedefinedWickFamily(powers.base, powers.coefficients.compose(coefficients))
    return RedefinedWickFamily(powers, coefficients)


def _point_smearing(lattice: LatticeSpace, site):
    """f with sum_y f(y) g(y) mu(y) = g(site)."""
    f = np.zeros(lattice.site_count)
    f[site] = 1.0 / lattice.volume_weight[site]
    return f


def _non_constant_part(F: PolynomialFunctional):
    return max((float(np.max(np.abs(v))) for k, v in F.kernels.items() if k >= 1), default=0.0)


def extract_ambiguity(family_A: WickFamily, family_B: WickFamily, max_k, tolerance=AMBIGUITY_TOLERANCE):
    """
    Recover c with redefine_wick(family_B, c) = family_A up to degree max_k.

    At each k the difference left after the lower coefficients is the C-number
    c_k Phi^0; a residual with field dependence means the families are not related.
    """
    lattice = family_A.lattice
    lattice.check_compatible(family_B.lattice)
    N = lattice.site_count
    zero_field = np.zeros(N)

    unit = np.ones(N)
    for k in (0, 1):
        gap = family_A.power(k, unit) - family_B.power(k, unit)
        if _non_constant_part(gap) > tolerance or abs(evaluate(gap, zero_field)) > tolerance:
            raise ValueError(f"families differ at degree {k}: not related by an admissible redefinition")

    found = AmbiguityCoefficients.zero(N)
    for k in range(2, max_k + 1):
        c_k = np.zeros(N)
        for x in range(N):
            f = _point_smearing(lattice, x)
            target = family_A.power(k, f)
            residual = target
            for j in range(1, k + 1):
                c = found(k - j)
                if np.any(c):
                    residual = residual - family_B.power(j, c * f).scaled(comb(k, j))
            derivative_part = _non_constant_part(residual)
            if derivative_part > tolerance * max(1.0, _non_constant_part(target)):
                raise ValueError(
                    f"degree-{k} difference at site {x} depends on the field ({derivative_part:.3e}): "
                    f"families are not related by an admissible redefinition"
                )
            c_k[x] = evaluate(residual, zero_field)
        found = AmbiguityCoefficients(N, {**found.coefficients, k: c_k})
        logger.debug(f"extracted c_{k}: max |c| = {np.max(np.abs(c_k)):.3e}")
    return found
