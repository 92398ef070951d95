import logging

import numpy as np

from algebra.contraction import ContractionOperator, gamma_exp_local, jet_coincidence, pair_coefficient
from algebra.equivariant import EquivariantObservable
from background.lattice import LatticeSpace
from common import settings
from common.errors import DegreeCapError, MissingCoincidenceError
from functionals.jets import jet_field
from functionals.polynomial import (
    PolynomialFunctional,
    conjugate,
    directional_derivative,
    evaluate,
    local_density,
    local_monomial,
    max_abs_difference,
)
from parametrix.green import Parametrix
from parametrix.smooth_part import SmoothPart

logger = logging.getLogger(__name__)


def check_wick_degree(k):
    if k < 0:
        raise ValueError(f"Wick degree must be >= 0, got {k}")
    if k > settings.MAX_DEGREE:
        raise DegreeCapError(f"Wick degree {k} exceeds the cap {settings.MAX_DEGREE}")


def wick_polynomial(k, phi, coincidence):
    """
    Site-wise :phi^k: = sum_n k!/(2^n n! (k-2n)!) [W]^n phi^(k-2n).

    Derivative in phi is k :phi^(k-1):, so every derivative identity of the
    powers reduces to this one.
    """
    phi = np.asarray(phi)
    w = np.asarray(coincidence)
    out = np.zeros(np.broadcast(phi, w).shape, dtype=np.result_type(phi.dtype, w.dtype, np.float64))
    for n in range(k // 2 + 1):
        out = out + pair_coefficient(k, n) * w ** n * phi ** (k - 2 * n)
    return out


def site_coincidence(W: SmoothPart, lattice: LatticeSpace, jet_order=0):
    """[W_P] as seen by the jet slots of each site, shape (N, J, J)."""
    if W.coincidence is None:
        raise MissingCoincidenceError("smooth part has no coincidence limit: needs smooth part")
    if W.lattice is not None:
        lattice.check_compatible(W.lattice)
    if jet_order == 0:
        return np.asarray(W.coincidence, dtype=float).reshape(-1, 1, 1)
    if W.kernel is None:
        raise MissingCoincidenceError("jet slots need the smooth-part kernel, not only its coincidence")
    return jet_coincidence(ContractionOperator.from_smooth_part(W), lattice, jet_order)


def wick_order(F: PolynomialFunctional, W: SmoothPart) -> PolynomialFunctional:
    """exp[Upsilon_W] applied to a local functional."""
    if not F.is_local:
        raise ValueError("Wick ordering acts on local functionals")
    return gamma_exp_local(site_coincidence(W, F.lattice, F.jet_order), F)


def wick_power(k, f, W: SmoothPart, phi=None, lattice: LatticeSpace = None, jet_order=0):
    """
    :Phi^k:_H(f) = exp[Upsilon_W] phi^k(f).

    Returns the local functional, or its value at phi when given.
    """
    check_wick_degree(k)
    lattice = lattice if lattice is not None else W.lattice
    if lattice is None:
        raise MissingCoincidenceError("no lattice attached to the smooth part; pass one explicitly")
    F = wick_order(local_monomial(lattice, k, f, jet_order), W)
    if phi is None:
        return F
    return evaluate(F, phi)


def wick_power_value(k, f, W: SmoothPart, phi, mu):
    """Closed form of :Phi^k:(f) at phi, without building the functional."""
    check_wick_degree(k)
    total = np.sum(np.asarray(f) * wick_polynomial(k, phi, W.coincidence) * mu)
    total = complex(total)
    return total.real if total.imag == 0.0 else total


def wick_observable(k, f, P: Parametrix, W: SmoothPart, jet_order=0) -> EquivariantObservable:
    """The Wick power as an equivariant observable anchored at the parametrix it was ordered with."""
    return EquivariantObservable(
        reference=P,
        functional=wick_power(k, f, W, lattice=P.lattice, jet_order=jet_order),
        label=f":phi^{k}:",
    )


# ------------------------------------------------------------
# axioms as residuals
# ------------------------------------------------------------

def lowered_monomial(F: PolynomialFunctional, psi) -> PolynomialFunctional:
    """<F^(1), psi> of a local functional, again local and one degree lower."""
    jpsi = jet_field(F.lattice, F.jet_order, psi)
    kernels = {
        k - 1: k * np.einsum("xi...,xi->x...", density, jpsi)
        for k, density in F.kernels.items() if k >= 1
    }
    return local_density(F.lattice, kernels or {0: np.zeros(F.lattice.site_count)}, F.jet_order)


def wick_derivative_axiom_check(k, f, W: SmoothPart, phi1, phi2, jet_order=0):
    """
    |<:Phi^k:(f)^(1)[phi1], phi2> - :<phi^k(f)^(1), phi2>:(phi1)|.

    For a value smearing the right side is k :Phi^(k-1):(phi2 f)(phi1).
    """
    lattice = W.lattice
    lhs = directional_derivative(wick_power(k, f, W, jet_order=jet_order), phi1, [phi2])
    if k == 0:
        return abs(lhs)
    lowered = lowered_monomial(local_monomial(lattice, k, f, jet_order), phi2)
    rhs = evaluate(wick_order(lowered, W), phi1)
    return abs(lhs - rhs)


def hermiticity_residual(k, f, W: SmoothPart, jet_order=0):
    """:Phi^k:(f)* against :Phi^k:(conj f), kernel by kernel."""
    return max_abs_difference(
        conjugate(wick_power(k, f, W, jet_order=jet_order)), wick_power(k, np.conj(f), W, jet_order=jet_order)
    )


def equivariance_residual(k, f, P: Parametrix, W_P: SmoothPart, Q: Parametrix, W_Q: SmoothPart):
    """F(P) against alpha_P^Q F(Q) for the Wick power ordered at P and at Q."""
    at_Q = wick_observable(k, f, Q, W_Q)
    return max_abs_difference(wick_power(k, f, W_P, lattice=P.lattice), at_Q.at(P))


def translation_residual(k, f, W: SmoothPart, shift, phi):
    """Wick powers commute with lattice translations on a homogeneous torus."""
    lattice = W.lattice
    perm = lattice.translation(shift)
    phi = np.asarray(phi)
    f = np.asarray(f)
    direct = wick_power(k, f, W, phi=phi[perm])
    moved = wick_power(k, f[np.argsort(perm)], W, phi=phi)
    return abs(direct - moved)
