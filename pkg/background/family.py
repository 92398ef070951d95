import logging
from dataclasses import dataclass, field, replace
from math import factorial
from typing import Dict, Optional

import numpy as np
import scipy.sparse as sp

from background.geometry import BackgroundGeometry
from background.lattice import LatticeSpace
from background.operator import link_operators, average_matrix

logger = logging.getLogger(__name__)


def power_series(u_coeffs, exponent, order):
    """
    Taylor coefficients of (1 + u(s))^p up to `order`, where u(s) = sum_{k>=1} u_k s^k.

    Uses the J.C.P. Miller recurrence, exact for polynomial u and any real p.
    Coefficients may be arrays (evaluated site-wise).
    """
    a = {k: np.asarray(v, dtype=float) for k, v in u_coeffs.items() if k >= 1}
    template = next(iter(a.values())) if a else np.asarray(0.0)
    b = [np.ones_like(template, dtype=float)]
    for n in range(1, order + 1):
        acc = np.zeros_like(template, dtype=float)
        for k in range(1, n + 1):
            if k in a:
                acc = acc + (k * (exponent + 1) - n) * a[k] * b[n - k]
        b.append(acc / n)
    return b


@dataclass(frozen=True, eq=False)
class SmoothFamily:
    """
    One-parameter (d = 1) compactly supported family of variations h_s of a base background.

        c_s     = c + sum_p s^p c_terms[p]
        A_s     = A + sum_p s^p A_terms[p]
        Omega_s = 1 + sum_p s^p conformal_terms[p],   g_s = Omega_s g

    Every term vanishes outside `support_mask` and all powers p are >= 1, so h_0 = h.
    """

    base: BackgroundGeometry
    lattice: LatticeSpace
    support_mask: np.ndarray
    c_terms: Dict[int, np.ndarray] = field(default_factory=dict)
    A_terms: Dict[int, np.ndarray] = field(default_factory=dict)
    conformal_terms: Dict[int, np.ndarray] = field(default_factory=dict)

    d: int = 1

    def __post_init__(self):
        N = self.lattice.site_count
        mask = np.asarray(self.support_mask, dtype=bool)
        if mask.shape != (N,):
            raise ValueError(f"support_mask must have {N} entries, got {mask.shape}")
        object.__setattr__(self, "support_mask", mask)

        for name, terms, shape in (
            ("c", self.c_terms, (N,)),
            ("A", self.A_terms, (N, self.lattice.dim)),
            ("conformal", self.conformal_terms, (N,)),
        ):
            for p, values in terms.items():
                if p < 1:
                    raise ValueError(f"{name} term of power {p}: deformations must vanish at s = 0")
                values = np.asarray(values, dtype=float)
                if values.shape != shape:
                    raise ValueError(f"{name} term of power {p} has shape {values.shape}, expected {shape}")
                if np.any(values[~mask] != 0.0):
                    raise ValueError(f"{name} term of power {p} is nonzero outside the support mask")

    # ------------------------------------------------------------

    @property
    def is_constant(self):
        return not (self.c_terms or self.A_terms or self.conformal_terms)

    def _u_coeffs(self):
        omega0 = self.base.conformal_field(self.lattice.site_count)
        return {p: np.asarray(v, dtype=float) / omega0 for p, v in self.conformal_terms.items()}

    def geometry_at(self, s) -> BackgroundGeometry:
        N = self.lattice.site_count
        c = self.base.c_field(N).copy()
        for p, v in self.c_terms.items():
            c = c + s ** p * np.asarray(v)

        A = self.base.A_field(N).copy()
        for p, v in self.A_terms.items():
            A = A + s ** p * np.asarray(v)

        omega = None
        if self.conformal_terms:
            omega = self.base.conformal_field(N).copy()
            for p, v in self.conformal_terms.items():
                omega = omega + s ** p * np.asarray(v)

        return replace(self.base, scalar_c=c, covector_A=A, conformal=omega)

    def mass_squared_rate(self):
        """d/ds of m^2 = c + g^{jk} A_j A_k at s = 0, per site."""
        N = self.lattice.site_count
        rate = np.array(self.c_terms.get(1, np.zeros(N)), dtype=float)
        if 1 in self.A_terms:
            ginv = np.linalg.inv(self.base.metric)
            rate = rate + 2.0 * np.einsum("xi,ij,xj->x", self.base.A_field(N), ginv, self.A_terms[1])
        return rate

    def polynomial_degree(self) -> Optional[int]:
        """Degree of s -> E_s, or None when E_s is not polynomial in s."""
        D = self.lattice.dim
        deg_c = max(self.c_terms, default=0)
        deg_A = max(self.A_terms, default=0)
        deg_omega = max(self.conformal_terms, default=0)

        if deg_omega and D % 2 == 1:
            return None

        kinetic_power = D // 2 - 1 if D % 2 == 0 else 0
        mass_power = D // 2
        kinetic = 2 * deg_A + deg_omega * kinetic_power
        mass = deg_omega * mass_power + deg_c
        return max(kinetic, mass)

    def operator_taylor_coefficient(self, n) -> np.ndarray:
        """n-th Taylor coefficient of E_s at s = 0 (exact)."""
        lattice = self.lattice
        N = lattice.site_count
        D = lattice.dim
        metric = self.base.metric
        base = float(np.prod(lattice.spacing) * np.sqrt(np.linalg.det(metric)))

        u = self._u_coeffs()
        kinetic_series = power_series(u, D / 2.0 - 1.0, n) if u else [np.ones(N)] + [np.zeros(N)] * n
        mass_series = power_series(u, D / 2.0, n) if u else [np.ones(N)] + [np.zeros(N)] * n

        omega0 = self.base.conformal_field(N)
        kinetic_series = [base * omega0 ** (D / 2.0 - 1.0) * k for k in kinetic_series]
        mass_series = [base * omega0 ** (D / 2.0) * m for m in mass_series]

        c_series = [self.base.c_field(N)] + [
            np.asarray(self.c_terms.get(p, np.zeros(N))) for p in range(1, n + 1)
        ]
        mass_coeff = sum(mass_series[i] * c_series[n - i] for i in range(n + 1))

        # L_k(s) = L_k + sum_p s^p diag(A_p,k) avg_k
        L0 = link_operators(lattice, self.base.A_field(N))
        averages = [average_matrix(lattice, axis) for axis in range(D)]

        def link_coeff(axis, p):
            if p == 0:
                return L0[axis]
            if p not in self.A_terms:
                return None
            return sp.diags(np.asarray(self.A_terms[p])[:, axis]) @ averages[axis]

        inverse_metric = np.linalg.inv(metric)
        total = sp.diags(mass_coeff).tocsr()
        for j in range(D):
            for k in range(D):
                gjk = inverse_metric[j, k]
                if gjk == 0.0:
                    continue
                for a in range(n + 1):
                    La = link_coeff(j, a)
                    if La is None:
                        continue
                    for b in range(n + 1 - a):
                        Lb = link_coeff(k, n - a - b)
                        if Lb is None:
                            continue
                        total = total + La.T @ sp.diags(gjk * kinetic_series[b]) @ Lb

        E_n = total.toarray() / lattice.cell_weight
        return 0.5 * (E_n + E_n.T)


def family_operator_derivative(family: SmoothFamily, lattice: LatticeSpace, order: int) -> np.ndarray:
    """G^(n) = d^n E_s / ds^n at s = 0."""
    if order < 1:
        raise ValueError(f"derivative order must be >= 1, got {order}")
    lattice.check_compatible(family.lattice)

    degree = family.polynomial_degree()
    if degree is not None and order > degree:
        logger.debug(f"order {order} exceeds the polynomial degree {degree} of the family: G^({order}) = 0")
        N = lattice.site_count
        return np.zeros((N, N))

    return factorial(order) * family.operator_taylor_coefficient(order)


def stencil_neighborhood(lattice: LatticeSpace, mask, radius=1):
    """Sites within `radius` link steps of a mask."""
    grown = np.asarray(mask, dtype=bool).copy()
    for _ in range(radius):
        current = grown.copy()
        for axis in range(lattice.dim):
            for step in (1, -1):
                nb = lattice.neighbor(axis, step)
                valid = nb >= 0
                grown[valid] |= current[nb[valid]]
    return grown


def bump(lattice: LatticeSpace, center, radius, amplitude=1.0):
    """Smooth compactly supported bump cos^2 profile, zero beyond `radius`."""
    site = lattice.flat_index(center) if np.ndim(center) else int(center)
    r = np.sqrt(np.sum(lattice.displacements_from(site) ** 2, axis=1))
    profile = np.where(r < radius, np.cos(0.5 * np.pi * r / radius) ** 2, 0.0)
    return amplitude * profile
