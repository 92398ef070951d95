import logging
from itertools import combinations, product
from math import comb, factorial
from string import ascii_letters
from typing import Mapping, Optional, Sequence

import numpy as np

from algebra.star_product import star_product, star_value
from common.errors import ExtensionRequiredError
from extension.diagonal import symmetrized_table
from functionals.polynomial import evaluate
from parametrix.green import Parametrix
from parametrix.smooth_part import SmoothPart
from wick.powers import check_wick_degree, wick_polynomial, wick_power

logger = logging.getLogger(__name__)


def _overlaps(f, g):
    return bool(np.any((np.asarray(f) != 0) & (np.asarray(g) != 0)))


def _as_real(total):
    total = complex(total)
    return total.real if total.imag == 0.0 else total


def hadamard_power_table(P: Parametrix, W: SmoothPart, n, diagonal=None):
    """
    t_n: H^n off the diagonal, H = P - W; the diagonal is taken from extension data.

    t_1 on the diagonal defaults to P(x, x) - [W](x), the lattice value of H at coincidence.
    """
    H = P.kernel - W.kernel
    if n == 0:
        return np.ones_like(H)
    table = symmetrized_table(H ** n)
    if diagonal is None:
        if n > 1:
            raise ExtensionRequiredError(f"H^{n} has no coincidence value: extension data required")
        diagonal = np.diag(P.kernel) - W.coincidence
    np.fill_diagonal(table, np.broadcast_to(np.asarray(diagonal, dtype=float), (H.shape[0],)))
    return table


def extended_power_table(P: Parametrix, W: SmoothPart, q, extension: Mapping[int, object]):
    """P^q with its diagonal extended: sum_n C(q, n) t_n W^(q - n)."""
    total = 0.0
    for n in range(q + 1):
        total = total + comb(q, n) * hadamard_power_table(P, W, n, extension.get(n)) * W.kernel ** (q - n)
    return total


def _line_multiplicities(ks):
    """
    Every multigraph on len(ks) vertices: {(i, j): q_ij} with vertex degrees at most k_i.
    """
    pairs = list(combinations(range(len(ks)), 2))
    ranges = [range(min(ks[i], ks[j]) + 1) for i, j in pairs]
    for counts in product(*ranges):
        degree = [0] * len(ks)
        for (i, j), q in zip(pairs, counts):
            degree[i] += q
            degree[j] += q
        if all(d <= k for d, k in zip(degree, ks)):
            yield dict(zip(pairs, counts)), degree


def overlapping_monomial_value(ks, smearings, P: Parametrix, W: SmoothPart, phi, extension: Mapping[int, object]):
    """
    Local Wick expansion of factors with overlapping supports:

        sum_q sum_{x_1..x_m} prod_i F_i(x_i) k_i!/(k_i - d_i)! :phi^(k_i - d_i):(x_i)
                             prod_{i<j} T_{q_ij}(x_i, x_j) / q_ij!

    over multigraphs q with vertex degrees d_i <= k_i, F_i = f_i mu. T_q is
    P^q with the diagonal extended for overlapping pairs; a point where
    several factors meet takes the product of the pairwise extensions.
    """
    if W.kernel is None:
        raise ExtensionRequiredError("overlapping factors need the full smooth-part kernel")
    mu = P.lattice.volume_weight
    w = W.coincidence
    phi = np.asarray(phi)
    weighted = [np.asarray(f) * mu for f in smearings]
    m = len(ks)

    tables = {}

    def line_table(i, j, q):
        overlapping = _overlaps(smearings[i], smearings[j])
        key = (q, overlapping)
        if key not in tables:
            tables[key] = extended_power_table(P, W, q, extension) if overlapping else P.kernel ** q
        return tables[key]

    letters = ascii_letters[:m]
    total = 0.0
    for lines, degree in _line_multiplicities(ks):
        operands, subscripts = [], []
        for i in range(m):
            falling = factorial(ks[i]) / factorial(ks[i] - degree[i])
            operands.append(falling * weighted[i] * wick_polynomial(ks[i] - degree[i], phi, w))
            subscripts.append(letters[i])
        for (i, j), q in lines.items():
            if q == 0:
                continue
            operands.append(line_table(i, j, q) / factorial(q))
            subscripts.append(letters[i] + letters[j])
        total = total + np.einsum(",".join(subscripts) + "->", *operands, optimize=True)
    return _as_real(total)


def _check_extension_covers(ks, smearings, extension):
    for i, j in combinations(range(len(ks)), 2):
        if not _overlaps(smearings[i], smearings[j]):
            continue
        top = min(ks[i], ks[j])
        if any(n not in extension for n in range(2, top + 1)):
            raise ExtensionRequiredError(
                f"overlapping factors of degrees {ks[i]}, {ks[j]} need extended H^n for n = 2..{top}"
            )


def wick_monomial(ks: Sequence[int], smearings, P: Parametrix, W: SmoothPart, phi,
                  extension: Optional[Mapping[int, object]] = None):
    """
    Value of Phi^(k_1, .., k_n)(f_1 (x) .. (x) f_n) at phi.

    Disjoint supports factorize into star products of the Wick powers. Any
    overlap sends the factors through the local Wick expansion, with the
    extended powers of H supplied in `extension` (degree -> diagonal values,
    or a DiagonalExtension).
    """
    if len(ks) != len(smearings):
        raise ValueError(f"{len(ks)} degrees for {len(smearings)} smearings")
    for k in ks:
        check_wick_degree(k)
    lattice = P.lattice
    mu = lattice.volume_weight

    scalar = 1.0
    factors = []
    for k, f in zip(ks, smearings):
        if k == 0:
            scalar = scalar * np.sum(np.asarray(f) * mu)
        else:
            factors.append((k, np.asarray(f)))

    if not factors:
        return _as_real(scalar)
    if len(factors) == 1:
        k, f = factors[0]
        return _as_real(scalar * wick_power(k, f, W, phi=phi, lattice=lattice))

    degrees = [k for k, _ in factors]
    fs = [f for _, f in factors]
    if not any(_overlaps(fs[i], fs[j]) for i, j in combinations(range(len(fs)), 2)):
        powers = [wick_power(k, f, W, lattice=lattice) for k, f in factors]
        if len(powers) == 2:
            return _as_real(scalar * star_value(powers[0], powers[1], P, phi))
        chain = powers[0]
        for F in powers[1:]:
            chain = star_product(chain, F, P)
        return _as_real(scalar * evaluate(chain, phi))

    extension = {} if extension is None else extension
    _check_extension_covers(degrees, fs, extension)
    logger.debug(f"overlapping Wick monomial of degrees {degrees}")
    return _as_real(scalar * overlapping_monomial_value(degrees, fs, P, W, phi, extension))


def _derivative_along(value_of, degree, scale=1.0):
    """d/dt at 0 of a polynomial of known degree, from exact interpolation at Chebyshev nodes."""
    nodes = scale * np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
    values = np.array([value_of(t) for t in nodes])
    coeffs = np.polynomial.polynomial.polyfit(nodes, values, degree)
    return coeffs[1] if degree >= 1 else 0.0


def monomial_derivative_axiom_check(ks, smearings, P: Parametrix, W: SmoothPart, phi, psi, extension=None):
    """
    |<Phi^k(f)^(1)[phi], psi> - sum_j k_j Phi^(k - e_j)(.., psi f_j, ..)(phi)|,
    the left side from exact polynomial interpolation along phi + t psi.
    """
    phi = np.asarray(phi)
    psi = np.asarray(psi)
    degree = int(sum(ks))

    lhs = _derivative_along(
        lambda t: wick_monomial(ks, smearings, P, W, phi + t * psi, extension), degree
    )

    rhs = 0.0
    for j, k in enumerate(ks):
        if k == 0:
            continue
        lowered = list(ks)
        lowered[j] = k - 1
        moved = list(smearings)
        moved[j] = psi * np.asarray(smearings[j])
        rhs = rhs + k * wick_monomial(lowered, moved, P, W, phi, extension)
    return abs(lhs - rhs)
