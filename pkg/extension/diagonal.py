import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from math import comb
from typing import Dict

import numpy as np

from background.lattice import LatticeSpace
from common.errors import ExtensionRequiredError
from extension.radial import RadialKernel, cell_average, hadamard_power_terms, subtraction_order
from parametrix.green import Parametrix
from parametrix.smooth_part import SmoothPart

logger = logging.getLogger(__name__)


def _physical_spacing(lattice):
    metric = lattice.metric
    gamma = metric[0, 0]
    if not np.allclose(metric, gamma * np.eye(lattice.dim), rtol=0, atol=1e-14):
        raise ExtensionRequiredError("extension data needs an isotropic metric")
    if len(set(lattice.spacing)) != 1:
        raise ExtensionRequiredError("extension data needs equal spacings on every axis")
    return lattice.spacing[0] * np.sqrt(gamma)


def hadamard_power_diagonal(P: Parametrix, W: SmoothPart, power, counterterm=0.0, radius=None):
    """
    Coincidence values t_n(x, x) extending H^n = (P - W)^n across the diagonal.

    Integrable powers (sd < D) take the cell average of the leading singular
    part. Otherwise t_n(x, .) is ball-subtracted: the diagonal cancels the sum
    of H^n over 0 < r < R. Either way the counterterm a_0 / mu(x) is added.
    """
    lattice = P.lattice
    D = lattice.dim
    a = _physical_spacing(lattice)
    terms = hadamard_power_terms(D, power, P.ref_length_nu)
    leading = RadialKernel(max(t.exponent for t in terms), 0, 1.0, D)
    N = lattice.site_count
    mu = lattice.volume_weight

    if subtraction_order(leading) < 0:
        return np.full(N, cell_average(terms, D, a)) + counterterm / mu

    if subtraction_order(leading) > 1:
        raise ExtensionRequiredError(
            f"H^{power} in D = {D} needs Taylor subtraction of order {subtraction_order(leading)}; "
            f"diagonal data covers orders 0 and 1"
        )
    if W.kernel is None:
        raise ExtensionRequiredError("ball subtraction needs the smooth-part kernel")

    physical = np.asarray(lattice.extent) * np.sqrt(np.diag(lattice.metric))
    R = physical.min() / 4.0 if radius is None else float(radius)
    H = P.kernel - W.kernel
    table = H ** power
    r = np.sqrt(2.0 * lattice.sigma_table())
    in_ball = (r > 0) & (r < R)
    ball_sums = np.sum(np.where(in_ball, table, 0.0) * mu[None, :], axis=1)
    logger.debug(f"H^{power}: ball-subtracted diagonal, radius {R:.4g}")
    return (counterterm - ball_sums) / mu


def extension_data(P: Parametrix, W: SmoothPart, max_power, counterterms=None, radius=None):
    """Diagonal data {n: t_n(x, x)} for n = 2..max_power, as consumed by wick monomials."""
    counterterms = counterterms or {}
    return {
        n: hadamard_power_diagonal(P, W, n, counterterms.get(n, 0.0), radius)
        for n in range(2, max_power + 1)
    }


@dataclass(frozen=True, eq=False)
class DiagonalExtension(Mapping):
    """
    Extended coincidence values h_n(x) = [H^n](x, x) of the Hadamard powers.

    h_1 is the lattice value P(x, x) - [W_P](x); higher powers come from
    `extension_data` and carry the counterterms. The singular part H does
    not move with the parametrix, so one instance serves every P = H + W_P
    of the background: P^n(x, x) extends to sum_j C(n, j) h_j w^(n - j)
    with w = P(x, x) - h_1.
    """

    lattice: LatticeSpace
    powers: Dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        N = self.lattice.site_count
        powers = {}
        for n, values in self.powers.items():
            if n < 1:
                raise ValueError(f"extended Hadamard powers start at 1, got {n}")
            values = np.broadcast_to(np.asarray(values, dtype=float), (N,)).copy()
            if not np.all(np.isfinite(values)):
                raise ValueError(f"extended H^{n} is not finite at every site")
            powers[n] = values
        object.__setattr__(self, "powers", powers)

    @classmethod
    def from_parametrix(cls, P: Parametrix, W: SmoothPart, max_power, counterterms=None, radius=None):
        powers = {1: np.diag(P.kernel) - W.coincidence}
        powers.update(extension_data(P, W, max_power, counterterms, radius))
        return cls(P.lattice, powers)

    def __getitem__(self, n):
        return self.powers[n]

    def __iter__(self):
        return iter(sorted(self.powers))

    def __len__(self):
        return len(self.powers)

    @property
    def max_power(self):
        return max(self.powers, default=0)

    def with_counterterm(self, n, a0) -> "DiagonalExtension":
        """The same data with a_0 / mu added to h_n: a change of the local term at degree n."""
        if n not in self.powers:
            raise ExtensionRequiredError(f"no extended H^{n} to shift")
        powers = dict(self.powers)
        powers[n] = powers[n] + np.asarray(a0, dtype=float) / self.lattice.volume_weight
        return DiagonalExtension(self.lattice, powers)

    def coincidence(self, n, parametrix_diagonal):
        """Extended P^n(x, x) for the parametrix whose diagonal is given."""
        missing = [j for j in range(1, n + 1) if j not in self.powers]
        if missing:
            raise ExtensionRequiredError(f"P^{n} at coincidence needs extended H^j for j = {missing}")
        w = np.asarray(parametrix_diagonal) - self.powers[1]
        total = w ** n
        for j in range(1, n + 1):
            total = total + comb(n, j) * self.powers[j] * w ** (n - j)
        return total


def symmetrized_table(table):
    """Symmetrize an extended two-point table over exchange of its factor indices."""
    table = np.asarray(table)
    return 0.5 * (table + table.T)
