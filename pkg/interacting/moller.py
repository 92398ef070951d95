import logging
from dataclasses import dataclass

import numpy as np

from algebra.contraction import ContractionOperator, gamma_exp
from algebra.star_product import star_product
from functionals.polynomial import (
    PolynomialFunctional,
    conjugate,
    field_smeared,
    local_monomial,
    max_abs_difference,
    unit,
)
from interacting.series import FormalSeries, check_series_order, exp_series, star_multiplier
from parametrix.green import Parametrix

logger = logging.getLogger(__name__)

SELF_ADJOINT_TOLERANCE = 1e-14


@dataclass(frozen=True, eq=False)
class InteractionTerm:
    """A self-adjoint local interaction V at a reference parametrix."""

    functional: PolynomialFunctional
    label: str = "V"

    def __post_init__(self):
        V = self.functional
        if not V.is_local:
            raise ValueError("the interaction must be a local functional")
        if max_abs_difference(conjugate(V), V) > SELF_ADJOINT_TOLERANCE:
            raise ValueError("the interaction must be self-adjoint (V* = V)")

    @classmethod
    def mass_term(cls, lattice, rho):
        """V = 1/2 integral rho phi^2."""
        return cls(local_monomial(lattice, 2, 0.5 * np.asarray(rho, dtype=float)), label="mass")

    def at(self, Q: Parametrix, P: Parametrix) -> PolynomialFunctional:
        """V carried from its reference parametrix P to Q, V[Q] = alpha_Q^P V[P]."""
        if Q is P:
            return self.functional
        Q.check_same_background(P)
        return gamma_exp(ContractionOperator(Q.kernel - P.kernel, "Q-P", smooth=True), self.functional)


def _as_series(F, order) -> FormalSeries:
    if isinstance(F, FormalSeries):
        if F.variable != "lambda":
            raise ValueError(f"expected a lambda-series, got a {F.variable}-series")
        return F.truncate(order) if F.order >= order else F
    return FormalSeries("lambda", {0: F}, order)


def partition_function(V: PolynomialFunctional, P, order, extension=None) -> FormalSeries:
    """Z_V[P] = exp_.P(lambda V)."""
    return exp_series(V, P, order, "lambda", extension)


def relative_kernel(P: Parametrix, G: Parametrix) -> ContractionOperator:
    P.check_same_background(G)
    return ContractionOperator(P.kernel - G.kernel, label=f"{P.label}-{G.label}", smooth=True)


def relative_star_product(F, H, P: Parametrix, G: Parametrix):
    """F .(P - G) H; P = G reduces to the pointwise product."""
    return star_product(F, H, relative_kernel(P, G))


def moller_map(F, V: PolynomialFunctional, P: Parametrix, G: Parametrix, order, extension=None) -> FormalSeries:
    """
    R_V(F)[P] = Z_V[P]^{-1} .(P - G) (Z_V[P] .P F), truncated at lambda^order.

    F is a functional at P or a lambda-series of them; V is V[P].
    Overlapping local factors in the .P products take P^n(x, x) from
    `extension`; the relative product under the smooth P - G needs none.
    """
    check_series_order("lambda", order)
    F = _as_series(F, order)
    Z = partition_function(V, P, order, extension)

    dressed = Z.product(F, star_multiplier(P, extension))
    relative = star_multiplier(relative_kernel(P, G))
    Z_inverse = Z.inverse(relative, unit(V.lattice))
    result = Z_inverse.product(dressed, relative)
    logger.debug(f"Moller map to lambda^{order}: {sorted(result.coefficients)}")
    return result


def born_term(f, rho, G: Parametrix) -> PolynomialFunctional:
    """Phi(rho G f), the first-order Moller image of Phi(f) for V = 1/2 integral rho phi^2."""
    mu = G.lattice.volume_weight
    Gf = G.kernel @ (np.asarray(f) * mu)
    return field_smeared(G.lattice, np.asarray(rho) * Gf)


def moller_covariance_residual(F_P: PolynomialFunctional, V: InteractionTerm, P: Parametrix,
                               Q: Parametrix, G: Parametrix, order, extension=None) -> float:
    """
    Compare R_V(F)[P] with alpha_P^Q R_V(F)[Q] for equivariant F and V given at P.
    One extension serves both sides, its Hadamard data do not depend on the parametrix.
    """
    P.check_same_background(Q)
    F_Q = gamma_exp(ContractionOperator(Q.kernel - P.kernel, "Q-P", smooth=True), F_P)
    at_P = moller_map(F_P, V.at(P, P), P, G, order, extension)
    at_Q = moller_map(F_Q, V.at(Q, P), Q, G, order, extension)
    back = ContractionOperator(P.kernel - Q.kernel, "P-Q", smooth=True)
    mapped = at_Q.map(lambda C: gamma_exp(back, C))
    return at_P.max_abs_difference(mapped)


def intertwiner_residual(f, rho, E, P: Parametrix, G: Parametrix, order, extension=None) -> float:
    """
    R_V(F - lambda V^(1)(f)) = F for F = Phi(E f) and V = 1/2 integral rho phi^2,
    where V^(1)(f) = Phi(rho f). Returns the largest coefficient mismatch.
    """
    lattice = P.lattice
    f = np.asarray(f, dtype=float)
    F = field_smeared(lattice, np.asarray(E) @ f)
    source = FormalSeries("lambda", {0: F, 1: field_smeared(lattice, -np.asarray(rho) * f)}, order)
    V = InteractionTerm.mass_term(lattice, rho)
    image = moller_map(source, V.functional, P, G, order, extension)
    return image.max_abs_difference(FormalSeries("lambda", {0: F}, order))
