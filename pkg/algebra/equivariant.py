from dataclasses import dataclass

from algebra.contraction import ContractionOperator, gamma_exp
from algebra.star_product import star_product
from functionals.polynomial import PolynomialFunctional, conjugate
from parametrix.green import Parametrix


def change_of_parametrix(F_at_Q: PolynomialFunctional, Q: Parametrix, P: Parametrix) -> PolynomialFunctional:
    """alpha_P^Q = exp[Upsilon_{P - Q}]."""
    P.check_same_background(Q)
    if P is Q:
        return F_at_Q
    return gamma_exp(ContractionOperator.difference(P, Q), F_at_Q)


@dataclass(frozen=True, eq=False)
class EquivariantObservable:
    """
    P -> F(P) stored at one reference parametrix; any other value follows from
    F(P) = alpha_P^Q F(Q).
    """

    reference: Parametrix
    functional: PolynomialFunctional
    label: str = ""

    @property
    def reference_parametrix_id(self):
        return f"{self.reference.background_id}:{self.reference.label}"

    def at(self, P: Parametrix) -> PolynomialFunctional:
        return change_of_parametrix(self.functional, self.reference, P)

    def reanchor(self, Q: Parametrix) -> "EquivariantObservable":
        return EquivariantObservable(Q, self.at(Q), self.label)

    def star(self, other: "EquivariantObservable") -> "EquivariantObservable":
        """Product in the algebra, computed at this observable's reference parametrix."""
        P = self.reference
        return EquivariantObservable(P, star_product(self.functional, other.at(P), P), f"{self.label}*{other.label}")

    def __add__(self, other):
        return EquivariantObservable(self.reference, self.functional + other.at(self.reference), self.label)

    def scaled(self, factor):
        return EquivariantObservable(self.reference, self.functional.scaled(factor), self.label)

    def involution(self):
        return EquivariantObservable(self.reference, conjugate(self.functional), self.label)
