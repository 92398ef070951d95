import logging
from math import factorial

import numpy as np

from algebra.contraction import ContractionOperator
from common.errors import ExtensionRequiredError
from functionals.polynomial import (
    MIXED,
    REGULAR,
    PolynomialFunctional,
    check_dense_size,
    conjugate,
    evaluate,
    functional_derivative,
    pointwise_product,
    symmetrize,
    to_dense,
    unit,
)
from parametrix.green import Parametrix

logger = logging.getLogger(__name__)


def as_contraction(P) -> ContractionOperator:
    if isinstance(P, ContractionOperator):
        return P
    if isinstance(P, Parametrix):
        return ContractionOperator.from_parametrix(P)
    return ContractionOperator(np.asarray(P), label="kernel", smooth=True)


def needs_extension(F: PolynomialFunctional, G: PolynomialFunctional, P: ContractionOperator):
    """
    Two local factors of degree >= 2 sharing sites: their kernels meet on the
    diagonal, where powers of a singular P have no value. Products with a
    mixed factor keep the lattice coincidence; n-fold local overlaps are
    evaluated as Wick monomials.
    """
    if P.smooth:
        return False
    if not (F.is_local and G.is_local):
        return False
    if F.max_degree < 2 or G.max_degree < 2:
        return False
    return bool(np.any(F.support & G.support))


def _check_extension(F, G, P: ContractionOperator, extension):
    if not needs_extension(F, G, P):
        return False
    if any(X.is_local and X.jet_order > 0 for X in (F, G)):
        raise ExtensionRequiredError("overlapping jet-valued local factors have no extended product")
    if extension is None:
        raise ExtensionRequiredError(
            "local factors of degree >= 2 overlap: pass extension data for the powers of P at coincidence"
        )
    return True


def _coincident_slab(kernel, n):
    """K(x, .., x, rest) with the first n slots pinned to one site."""
    sites = np.arange(kernel.shape[0])
    return kernel[(sites,) * n]


def _coincidence_weights(P: ContractionOperator, extension, mu, top):
    """mu^2n (t_n - P^n) on the diagonal, n = 2..top."""
    diagonal = np.diag(P.kernel)
    return {
        n: mu ** (2 * n) * (extension.coincidence(n, diagonal) - diagonal ** n)
        for n in range(2, top + 1)
    }


def coincidence_correction(F: PolynomialFunctional, G: PolynomialFunctional, P: ContractionOperator, extension):
    """
    Kernels that move the all-coincident term of each n-fold contraction from
    P(x, x)^n to the extended value t_n(x, x). Single lines keep P(x, x).
    """
    lattice = F.lattice
    Fd, Gd = to_dense(F), to_dense(G)
    top = min(Fd.max_degree, Gd.max_degree)
    weights = _coincidence_weights(P, extension, lattice.volume_weight, top)

    kernels = {}
    for n, weight in weights.items():
        for a, Fa in Fd.kernels.items():
            if a < n:
                continue
            F_slab = _coincident_slab(Fa, n) * weight.reshape((-1,) + (1,) * (a - n))
            for b, Gb in Gd.kernels.items():
                if b < n:
                    continue
                check_dense_size(lattice.site_count, a + b - 2 * n)
                coeff = factorial(a) / factorial(a - n) * factorial(b) / factorial(b - n) / factorial(n)
                term = coeff * np.tensordot(F_slab, _coincident_slab(Gb, n), axes=([0], [0]))
                target = a + b - 2 * n
                kernels[target] = kernels.get(target, 0) + term
    return {k: symmetrize(np.asarray(v)) for k, v in kernels.items()}


def _slot_contraction(F_kernel, G_kernel, matrices):
    """
    <F^(n), (M_1 (x) .. (x) M_n) G^(n)> for one pair of homogeneous kernels,
    without the falling-factorial prefactors. Returns a kernel over the
    remaining (a - n) + (b - n) slots.
    """
    n = len(matrices)
    out = F_kernel
    for M in matrices:
        # contract the leading F slot with M; the new G-side slot goes last
        out = np.tensordot(out, M, axes=([0], [0]))
    a_rest = out.ndim - n
    return np.tensordot(out, G_kernel, axes=(list(range(a_rest, a_rest + n)), list(range(n))))


def contraction_term(F: PolynomialFunctional, G: PolynomialFunctional, matrices):
    """
    sum over degrees of a!/(a-n)! b!/(b-n)! <F_a, (M..) G_b>, symmetrized, with
    the mu-weights folded into the matrices by the caller.
    """
    n = len(matrices)
    lattice = F.lattice
    kernels = {}
    for a, Fa in F.kernels.items():
        if a < n:
            continue
        for b, Gb in G.kernels.items():
            if b < n:
                continue
            check_dense_size(lattice.site_count, a + b - 2 * n)
            coeff = factorial(a) / factorial(a - n) * factorial(b) / factorial(b - n)
            term = coeff * _slot_contraction(Fa, Gb, matrices)
            target = a + b - 2 * n
            kernels[target] = kernels.get(target, 0) + term
    return {k: symmetrize(np.asarray(v)) for k, v in kernels.items()}


def _result_locality(F, G):
    return REGULAR if F.locality == G.locality == REGULAR else MIXED


def star_product(F: PolynomialFunctional, G: PolynomialFunctional, P, extension=None) -> PolynomialFunctional:
    """
    F .P G = F G + sum_{n>=1} 1/n! <F^(n), P^(x)n G^(n)>.

    When P is singular and local factors overlap, the coincident powers P^n(x, x),
    n >= 2, are taken from `extension` (a DiagonalExtension).
    """
    F.lattice.check_compatible(G.lattice)
    P = as_contraction(P)
    extended = _check_extension(F, G, P, extension)

    product = pointwise_product(F, G)
    top = min(F.max_degree, G.max_degree)
    if top == 0 or not np.any(P.kernel):
        return product

    Fd, Gd = to_dense(F), to_dense(G)
    mu = F.lattice.volume_weight
    M = P.kernel * np.outer(mu, mu)

    corrections = {}
    for n in range(1, top + 1):
        for degree, kernel in contraction_term(Fd, Gd, [M] * n).items():
            corrections[degree] = corrections.get(degree, 0) + kernel / factorial(n)
    if extended:
        for degree, kernel in coincidence_correction(Fd, Gd, P, extension).items():
            corrections[degree] = corrections.get(degree, 0) + kernel

    correction = PolynomialFunctional(F.lattice, corrections, _result_locality(F, G))
    return product + correction


def star_power(F: PolynomialFunctional, n, P, extension=None) -> PolynomialFunctional:
    """F .P F .P ... (n factors); n = 0 gives the unit."""
    result = unit(F.lattice)
    for _ in range(n):
        result = star_product(result, F, P, extension)
    return result


def star_value(F: PolynomialFunctional, G: PolynomialFunctional, P, phi, extension=None):
    """
    (F .P G)(phi) from derivative tensors at phi, without forming the product kernels.
    """
    F.lattice.check_compatible(G.lattice)
    P = as_contraction(P)
    extended = _check_extension(F, G, P, extension)

    mu = F.lattice.volume_weight
    M = P.kernel * np.outer(mu, mu)
    total = evaluate(F, phi) * evaluate(G, phi)
    top = min(F.max_degree, G.max_degree)
    weights = _coincidence_weights(P, extension, mu, top) if extended else {}

    for n in range(1, top + 1):
        dF = functional_derivative(F, phi, n)
        dG = functional_derivative(G, phi, n)
        out = dF
        for _ in range(n):
            out = np.tensordot(out, M, axes=([0], [0]))
        total = total + np.tensordot(out, dG, axes=n) / factorial(n)
        if n in weights:
            total = total + np.sum(weights[n] * _coincident_slab(dF, n) * _coincident_slab(dG, n)) / factorial(n)

    total = complex(total)
    return total.real if total.imag == 0.0 else total


def involution(F: PolynomialFunctional) -> PolynomialFunctional:
    """F*(phi) = conj F(phi)."""
    return conjugate(F)
