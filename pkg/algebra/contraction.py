import logging
from dataclasses import dataclass
from math import factorial

import numpy as np

from common.errors import MissingCoincidenceError
from functionals.jets import jet_operators
from functionals.polynomial import LOCAL, PolynomialFunctional
from parametrix.green import Parametrix
from parametrix.smooth_part import SmoothPart

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ContractionOperator:
    """
    Upsilon_S F = 1/2 <S, F^(2)>, lowering the degree of F by two.

    `smooth` marks kernels whose diagonal is a genuine coincidence value
    (smooth parts, differences of parametrices); only those may contract local
    functionals.
    """

    kernel: np.ndarray
    label: str = ""
    smooth: bool = True

    def __post_init__(self):
        S = np.asarray(self.kernel)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"contraction kernel must be square, got {S.shape}")
        scale = max(np.abs(S).max(), 1.0)
        if np.abs(S - S.T).max() > SYMMETRY_TOLERANCE * scale:
            raise ValueError("contraction kernel must be symmetric")
        object.__setattr__(self, "kernel", 0.5 * (S + S.T))

    @classmethod
    def from_smooth_part(cls, W: SmoothPart):
        if W.kernel is None:
            raise MissingCoincidenceError("smooth part carries no kernel, only its coincidence limit")
        return cls(W.kernel, label="W", smooth=True)

    @classmethod
    def from_parametrix(cls, P: Parametrix):
        return cls(P.kernel, label=P.label or "P", smooth=False)

    @classmethod
    def difference(cls, P: Parametrix, Q: Parametrix):
        """P - Q, smooth whenever both share their singular part."""
        P.check_same_background(Q)
        return cls(P.kernel - Q.kernel, label=f"{P.label}-{Q.label}", smooth=True)

    def __add__(self, other):
        return ContractionOperator(
            self.kernel + other.kernel, f"{self.label}+{other.label}", self.smooth and other.smooth
        )

    def scaled(self, factor):
        return ContractionOperator(factor * self.kernel, self.label, self.smooth)


# ------------------------------------------------------------
# exp[Upsilon_S]
# ------------------------------------------------------------

def pair_coefficient(degree, pairs):
    """a! / ((a - 2n)! 2^n n!): number of ways to pick n unordered slot pairs."""
    return factorial(degree) / (factorial(degree - 2 * pairs) * 2 ** pairs * factorial(pairs))


def _weighted(S, mu):
    return S * np.outer(mu, mu)


def _gamma_exp_dense(S, F: PolynomialFunctional):
    S_mu = _weighted(S.kernel, F.lattice.volume_weight)
    kernels = {}
    for degree, kernel in F.kernels.items():
        current = kernel
        for n in range(degree // 2 + 1):
            if n > 0:
                current = np.tensordot(S_mu, current, axes=([0, 1], [0, 1]))
            target = degree - 2 * n
            kernels[target] = kernels.get(target, 0) + pair_coefficient(degree, n) * current
    return PolynomialFunctional(F.lattice, kernels, F.locality, F.jet_order)


def jet_coincidence(S: ContractionOperator, lattice, jet_order):
    """S_x[i, j] = (J_i S J_j^T)(x, x): the kernel seen by the jet slots at one site."""
    ops = jet_operators(lattice, jet_order)
    J = len(ops)
    N = lattice.site_count
    out = np.zeros((N, J, J), dtype=S.kernel.dtype)
    for i in range(J):
        JS = ops[i] @ S.kernel
        for j in range(i, J):
            value = np.asarray(ops[j].multiply(JS).sum(axis=1)).ravel()
            out[:, i, j] = value
            out[:, j, i] = value
    return out


def _gamma_exp_local(S, F: PolynomialFunctional):
    return gamma_exp_local(jet_coincidence(S, F.lattice, F.jet_order), F)


def gamma_exp_local(S_x, F: PolynomialFunctional) -> PolynomialFunctional:
    """exp[Upsilon] of a local functional from the per-site jet coincidence tensor S_x (N, J, J)."""
    kernels = {}
    for degree, density in F.kernels.items():
        current = density
        for n in range(degree // 2 + 1):
            if n > 0:
                current = np.einsum("xij...,xij->x...", current, S_x)
            target = degree - 2 * n
            kernels[target] = kernels.get(target, 0) + pair_coefficient(degree, n) * current
    return PolynomialFunctional(F.lattice, kernels, LOCAL, F.jet_order)


def gamma_exp(S: ContractionOperator, F: PolynomialFunctional) -> PolynomialFunctional:
    """exp[Upsilon_S] F = sum_n 1/(2^n n!) <S^(x)n, F^(2n)> (finite for polynomial F)."""
    if S.kernel.shape[0] != F.lattice.site_count:
        raise ValueError(
            f"contraction kernel acts on {S.kernel.shape[0]} sites, functional on {F.lattice.site_count}"
        )
    if not np.any(S.kernel):
        return F

    if F.is_local:
        contracted = [k for k in F.kernels if k >= 2]
        if contracted and not S.smooth:
            raise MissingCoincidenceError(
                f"local functional contracted with singular kernel {S.label!r}: needs smooth part"
            )
        return _gamma_exp_local(S, F)
    return _gamma_exp_dense(S, F)


def upsilon(S: ContractionOperator, F: PolynomialFunctional) -> PolynomialFunctional:
    """Single contraction Upsilon_S F."""
    if F.is_local:
        if not S.smooth and any(k >= 2 for k in F.kernels):
            raise MissingCoincidenceError(
                f"local functional contracted with singular kernel {S.label!r}: needs smooth part"
            )
        S_x = jet_coincidence(S, F.lattice, F.jet_order)
        kernels = {
            degree - 2: 0.5 * degree * (degree - 1) * np.einsum("xij...,xij->x...", density, S_x)
            for degree, density in F.kernels.items() if degree >= 2
        }
        kernels = kernels or {0: np.zeros(F.lattice.site_count)}
        return PolynomialFunctional(F.lattice, kernels, LOCAL, F.jet_order)

    S_mu = _weighted(S.kernel, F.lattice.volume_weight)
    kernels = {
        degree - 2: 0.5 * degree * (degree - 1) * np.tensordot(S_mu, kernel, axes=([0, 1], [0, 1]))
        for degree, kernel in F.kernels.items() if degree >= 2
    }
    kernels = kernels or {0: np.asarray(0.0)}
    return PolynomialFunctional(F.lattice, kernels, F.locality, F.jet_order)
