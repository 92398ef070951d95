from dataclasses import dataclass
from itertools import permutations
from math import factorial
from typing import Dict

import numpy as np

from background.family import stencil_neighborhood
from background.lattice import LatticeSpace
from common import settings
from common.errors import DegreeCapError, LatticeError
from functionals.jets import jet_component_count, jet_field, jet_operators


REGULAR = "regular-dense"
LOCAL = "local-diagonal"
MIXED = "mixed"


def symmetrize(tensor):
    """Average of a tensor over all permutations of its axes."""
    tensor = np.asarray(tensor)
    if tensor.ndim < 2:
        return tensor
    perms = list(permutations(range(tensor.ndim)))
    acc = np.zeros_like(tensor)
    for perm in perms:
        acc += np.transpose(tensor, perm)
    return acc / len(perms)


def symmetrize_jet_slots(tensor):
    """Symmetrize the trailing jet axes of a local (N, J, ..., J) density."""
    tensor = np.asarray(tensor)
    k = tensor.ndim - 1
    if k < 2:
        return tensor
    perms = list(permutations(range(1, k + 1)))
    acc = np.zeros_like(tensor)
    for perm in perms:
        acc = acc + np.transpose(tensor, (0,) + perm)
    return acc / len(perms)


def check_dense_size(site_count, degree):
    if degree > settings.MAX_DEGREE:
        raise DegreeCapError(f"degree {degree} exceeds the configured cap {settings.MAX_DEGREE}")
    entries = site_count ** degree
    if entries > settings.MAX_DENSE_ENTRIES:
        raise DegreeCapError(
            f"a dense degree-{degree} kernel on {site_count} sites needs {entries} entries "
            f"(cap {settings.MAX_DENSE_ENTRIES}); use a smaller lattice"
        )


@dataclass(frozen=True, eq=False)
class PolynomialFunctional:
    """
    F(phi) = sum_k <F_k, (j phi)^{(x) k}>.

    regular-dense / mixed: kernels[k] has shape (N,)*k over field values and
        F(phi) = sum F_k(y_1..y_k) phi(y_1)..phi(y_k) mu(y_1)..mu(y_k).
    local-diagonal: kernels[k] has shape (N,) + (J,)*k and
        F(phi) = sum_x mu(x) omega_k(x)[j phi(x), .., j phi(x)].
    """

    lattice: LatticeSpace
    kernels: Dict[int, np.ndarray]
    locality: str = REGULAR
    jet_order: int = 0

    def __post_init__(self):
        N = self.lattice.site_count
        J = jet_component_count(self.lattice.dim, self.jet_order)
        clean = {}
        for k, kernel in self.kernels.items():
            kernel = np.asarray(kernel)
            if self.locality == LOCAL:
                expected = (N,) + (J,) * k
            else:
                expected = (N,) * k
            if kernel.shape != expected:
                raise ValueError(f"degree-{k} kernel has shape {kernel.shape}, expected {expected}")
            clean[k] = kernel
        object.__setattr__(self, "kernels", clean)

    # ------------------------------------------------------------

    @property
    def max_degree(self):
        nonzero = [k for k, v in self.kernels.items() if np.any(v != 0)]
        return max(nonzero, default=0)

    @property
    def is_local(self):
        return self.locality == LOCAL

    @property
    def dtype(self):
        return np.result_type(*[v.dtype for v in self.kernels.values()], np.float64)

    @property
    def support(self):
        N = self.lattice.site_count
        mask = np.zeros(N, dtype=bool)
        for k, kernel in self.kernels.items():
            if k == 0 and not self.is_local:
                continue
            nz = kernel != 0
            if self.is_local:
                mask |= nz.reshape(N, -1).any(axis=1)
                continue
            for axis in range(k):
                others = tuple(i for i in range(k) if i != axis)
                mask |= nz.any(axis=others) if others else nz
        if self.is_local and self.jet_order > 0:
            mask = stencil_neighborhood(self.lattice, mask, radius=1)
        return mask

    def kernel(self, k):
        if k in self.kernels:
            return self.kernels[k]
        N = self.lattice.site_count
        if self.is_local:
            J = jet_component_count(self.lattice.dim, self.jet_order)
            return np.zeros((N,) + (J,) * k)
        return np.zeros((N,) * k)

    # ------------------------------------------------------------
    # vector-space structure

    def scaled(self, factor):
        return PolynomialFunctional(
            self.lattice,
            {k: factor * v for k, v in self.kernels.items()},
            self.locality,
            self.jet_order,
        )

    def __neg__(self):
        return self.scaled(-1.0)

    def __add__(self, other):
        if not isinstance(other, PolynomialFunctional):
            return NotImplemented
        self.lattice.check_compatible(other.lattice)
        if self.is_local and other.is_local and self.jet_order == other.jet_order:
            a, b = self, other
            locality = LOCAL
        else:
            a, b = to_dense(self), to_dense(other)
            locality = REGULAR if self.locality == other.locality == REGULAR else MIXED
        degrees = set(a.kernels) | set(b.kernels)
        kernels = {k: a.kernel(k) + b.kernel(k) for k in degrees}
        return PolynomialFunctional(self.lattice, kernels, locality, a.jet_order)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, factor):
        if isinstance(factor, PolynomialFunctional):
            return pointwise_product(self, factor)
        return self.scaled(factor)

    __rmul__ = scaled


# ------------------------------------------------------------
# constructors
# ------------------------------------------------------------

def constant(lattice: LatticeSpace, value=1.0):
    return PolynomialFunctional(lattice, {0: np.asarray(value)}, REGULAR)


def unit(lattice: LatticeSpace):
    return constant(lattice, 1.0)


def local_monomial(lattice: LatticeSpace, k, f, jet_order=0):
    """
    integral of f phi^k. A jet-valued f of shape (N, J) smears
    phi^(k-1) sum_i f_i (j phi)_i instead, with (j phi)_0 = phi.
    """
    N = lattice.site_count
    J = jet_component_count(lattice.dim, jet_order)
    f = np.asarray(f)
    density = np.zeros((N,) + (J,) * k, dtype=np.result_type(f.dtype, np.float64))
    if f.ndim == 1:
        density[(slice(None),) + (0,) * k] = f
        return PolynomialFunctional(lattice, {k: density}, LOCAL, jet_order)
    if k < 1 or f.shape != (N, J):
        raise ValueError(f"jet-valued smearing needs k >= 1 and shape ({N}, {J}), got k = {k}, {f.shape}")
    density[(slice(None),) + (0,) * (k - 1) + (slice(None),)] = f
    return PolynomialFunctional(lattice, {k: symmetrize_jet_slots(density)}, LOCAL, jet_order)


def field_smeared(lattice: LatticeSpace, f):
    """Phi(f)(phi) = sum_x f(x) phi(x) mu(x)."""
    return local_monomial(lattice, 1, f)


def local_density(lattice: LatticeSpace, densities, jet_order=0):
    kernels = {k: symmetrize_jet_slots(np.asarray(v)) for k, v in densities.items()}
    return PolynomialFunctional(lattice, kernels, LOCAL, jet_order)


def dense(lattice: LatticeSpace, kernels):
    for k in kernels:
        check_dense_size(lattice.site_count, k)
    return PolynomialFunctional(
        lattice, {k: symmetrize(np.asarray(v)) for k, v in kernels.items()}, REGULAR
    )


def random_regular(lattice: LatticeSpace, degree, rng, complex_valued=False, scale=1.0):
    N = lattice.site_count
    kernels = {}
    for k in range(degree + 1):
        check_dense_size(N, k)
        values = rng.standard_normal((N,) * k)
        if complex_valued:
            values = values + 1j * rng.standard_normal((N,) * k)
        kernels[k] = scale * values / max(N, 1) ** (0.5 * k)
    return dense(lattice, kernels)


# ------------------------------------------------------------
# jets <-> value slots
# ------------------------------------------------------------

def _local_to_value_kernel(F: PolynomialFunctional, rho, n):
    """
    Convert a local rank-n density rho (N, J^n) into the value-slot kernel
    K(y_1..y_n) = sum_x mu(x) rho(x)[j..] prod J_j(x, y_i) / prod mu(y_i).
    """
    lattice = F.lattice
    mu = lattice.volume_weight
    weighted = rho * mu.reshape((-1,) + (1,) * n)

    if n == 0:
        return np.asarray(weighted.sum())
    if F.jet_order == 0:
        # value slots only: the kernel lives on the full diagonal
        check_dense_size(lattice.site_count, n)
        out = np.zeros((lattice.site_count,) * n, dtype=weighted.dtype)
        sites = np.arange(lattice.site_count)
        out[(sites,) * n] = weighted.reshape(-1) / mu ** n
        return out

    ops = jet_operators(lattice, F.jet_order)
    if n == 1:
        out = sum(ops[j].T @ weighted[:, j] for j in range(len(ops)))
        return out / mu
    if n == 2:
        N = lattice.site_count
        out = np.zeros((N, N), dtype=weighted.dtype)
        for i in range(len(ops)):
            for j in range(len(ops)):
                w = weighted[:, i, j]
                if not np.any(w):
                    continue
                out = out + (ops[i].T @ (ops[j].multiply(w[:, None])).toarray())
        return out / np.outer(mu, mu)

    check_dense_size(lattice.site_count, n)
    dense_ops = np.stack([op.toarray() for op in ops])   # (J, N, N)
    out = weighted
    for _ in range(n):
        # contract the first jet axis (position 1) against J(x, y), append y
        out = np.einsum("xj...,jxy->x...y", out, dense_ops)
    out = out.sum(axis=0)
    for _ in range(n):
        out = out / mu.reshape((-1,) + (1,) * (n - 1))
        out = np.moveaxis(out, 0, -1)
    return out


def to_dense(F: PolynomialFunctional) -> PolynomialFunctional:
    if not F.is_local:
        return F
    kernels = {}
    for k, rho in F.kernels.items():
        check_dense_size(F.lattice.site_count, k)
        kernels[k] = symmetrize(_local_to_value_kernel(F, rho, k))
    return PolynomialFunctional(F.lattice, kernels, REGULAR)


# ------------------------------------------------------------
# evaluation and derivatives
# ------------------------------------------------------------

def _check_field(F, phi):
    phi = np.asarray(phi)
    if phi.shape[-1] != F.lattice.site_count:
        raise LatticeError(
            f"field has {phi.shape[-1]} samples, functional lives on {F.lattice.site_count} sites"
        )
    return phi


def _contract_dense(kernel, weighted_phi, slots):
    """Contract the last `slots` axes of a dense kernel with mu*phi."""
    out = kernel
    for _ in range(slots):
        out = out @ weighted_phi
    return out


def _contract_local(density, jphi, slots):
    """Contract the last `slots` jet axes of a local density with j phi, site-wise."""
    out = density
    for _ in range(slots):
        out = np.einsum("x...j,xj->x...", out, jphi)
    return out


def evaluate(F: PolynomialFunctional, phi):
    phi = _check_field(F, phi)
    if phi.ndim == 2:
        return evaluate_batch(F, phi)

    mu = F.lattice.volume_weight
    total = 0.0
    if F.is_local:
        jphi = jet_field(F.lattice, F.jet_order, phi)
        for k, rho in F.kernels.items():
            total = total + np.sum(mu * _contract_local(rho, jphi, k))
    else:
        weighted = mu * phi
        for k, kernel in F.kernels.items():
            total = total + _contract_dense(kernel, weighted, k)
    total = complex(total)
    return total.real if total.imag == 0.0 else total


def evaluate_batch(F: PolynomialFunctional, phis):
    """Values of F on a (B, N) batch of configurations."""
    phis = _check_field(F, phis)
    mu = F.lattice.volume_weight
    B = phis.shape[0]
    total = np.zeros(B, dtype=np.result_type(F.dtype, phis.dtype))

    if F.is_local:
        jphi = jet_field(F.lattice, F.jet_order, phis)      # (B, N, J)
        for k, rho in F.kernels.items():
            out = np.broadcast_to(rho, (B,) + rho.shape)
            for _ in range(k):
                out = np.einsum("bx...j,bxj->bx...", out, jphi)
            total = total + np.einsum("bx,x->b", out, mu)
        return total

    weighted = phis * mu
    for k, kernel in F.kernels.items():
        if k == 0:
            total = total + kernel
            continue
        out = np.tensordot(weighted, kernel, axes=([1], [0]))    # (B, N^(k-1))
        for _ in range(k - 1):
            out = np.einsum("bi...,bi->b...", out, weighted)
        total = total + out
    return total


def functional_derivative(F: PolynomialFunctional, phi, order):
    """
    Symmetric kernel F^(n)[phi] in the density convention:
        <F^(n)[phi], psi_1 (x) .. (x) psi_n> = sum F^(n)(y..) psi_1(y_1)..mu(y_1)..
    """
    if order < 1:
        raise ValueError(f"derivative order must be >= 1, got {order}")
    phi = _check_field(F, phi)
    N = F.lattice.site_count
    check_dense_size(N, order)
    mu = F.lattice.volume_weight

    out = np.zeros((N,) * order, dtype=np.result_type(F.dtype, phi.dtype))
    if F.is_local:
        jphi = jet_field(F.lattice, F.jet_order, phi)
        for k, rho in F.kernels.items():
            if k < order:
                continue
            coeff = factorial(k) / factorial(k - order)
            reduced = _contract_local(rho, jphi, k - order)
            out = out + coeff * _local_to_value_kernel(F, reduced, order)
        return symmetrize(out)

    weighted = mu * phi
    for k, kernel in F.kernels.items():
        if k < order:
            continue
        coeff = factorial(k) / factorial(k - order)
        out = out + coeff * _contract_dense(kernel, weighted, k - order)
    return out


def directional_derivative(F: PolynomialFunctional, phi, directions):
    """<F^(n)[phi], psi_1 (x) .. (x) psi_n> without forming the rank-n kernel."""
    phi = _check_field(F, phi)
    n = len(directions)
    mu = F.lattice.volume_weight
    total = 0.0

    if F.is_local:
        jphi = jet_field(F.lattice, F.jet_order, phi)
        jpsis = [jet_field(F.lattice, F.jet_order, psi) for psi in directions]
        for k, rho in F.kernels.items():
            if k < n:
                continue
            coeff = factorial(k) / factorial(k - n)
            out = _contract_local(rho, jphi, k - n)
            for jpsi in jpsis:
                out = np.einsum("x...j,xj->x...", out, jpsi)
            total = total + coeff * np.sum(mu * out)
    else:
        weighted = mu * phi
        for k, kernel in F.kernels.items():
            if k < n:
                continue
            coeff = factorial(k) / factorial(k - n)
            out = _contract_dense(kernel, weighted, k - n)
            for psi in directions:
                out = out @ (mu * np.asarray(psi))
            total = total + coeff * out

    total = complex(total)
    return total.real if total.imag == 0.0 else total


# ------------------------------------------------------------
# products and pullbacks
# ------------------------------------------------------------

def _single_site(mask):
    idx = np.flatnonzero(mask)
    return int(idx[0]) if idx.size == 1 else None


def pointwise_product(F: PolynomialFunctional, G: PolynomialFunctional) -> PolynomialFunctional:
    F.lattice.check_compatible(G.lattice)
    lattice = F.lattice

    # constants act by scaling and keep locality
    for a, b in ((F, G), (G, F)):
        if a.max_degree == 0 and not a.is_local:
            return b.scaled(a.kernel(0)[()])

    if F.is_local and G.is_local and F.jet_order == G.jet_order == 0:
        site = _single_site(F.support)
        if site is not None and _single_site(G.support) == site:
            mu = lattice.volume_weight[site]
            kernels = {}
            for a, ra in F.kernels.items():
                for b, rb in G.kernels.items():
                    outer = np.multiply.outer(ra[site], rb[site])
                    prod = np.zeros((lattice.site_count,) + outer.shape, dtype=outer.dtype)
                    prod[site] = mu * outer
                    kernels[a + b] = kernels.get(a + b, 0) + prod
            kernels = {k: symmetrize_jet_slots(v) for k, v in kernels.items()}
            return PolynomialFunctional(lattice, kernels, LOCAL, F.jet_order)

    locality = REGULAR if not (F.is_local or G.is_local) else MIXED
    Fd, Gd = to_dense(F), to_dense(G)
    kernels = {}
    for a, ka in Fd.kernels.items():
        for b, kb in Gd.kernels.items():
            check_dense_size(lattice.site_count, a + b)
            term = np.multiply.outer(ka, kb)
            kernels[a + b] = kernels.get(a + b, 0) + term
    kernels = {k: symmetrize(np.asarray(v)) for k, v in kernels.items()}
    return PolynomialFunctional(lattice, kernels, locality)


def is_lattice_isometry(lattice: LatticeSpace, perm, atol=1e-12):
    """A permutation is an isometry when it preserves every minimal-image distance."""
    perm = np.asarray(perm)
    N = lattice.site_count
    if sorted(perm.tolist()) != list(range(N)):
        return False
    if not np.allclose(lattice.volume_weight[perm], lattice.volume_weight, rtol=atol, atol=0):
        return False
    for site in range(min(N, 8)):
        d_before = lattice.sigma_from(site)
        d_after = lattice.sigma_from(int(perm[site]))[perm]
        if not np.allclose(d_before, d_after, rtol=0, atol=atol):
            return False
    return True


def pullback_isometry(F: PolynomialFunctional, perm) -> PolynomialFunctional:
    """
    (tau^* F)(phi) = F(phi o tau), where (phi o tau)[x] = phi[perm[x]].

    Kernels move with the inverse permutation, F'_k(y_1..) = F_k(tau^-1 y_1, ..),
    so Phi(f) pulls back to Phi(f o tau^-1).
    """
    perm = np.asarray(perm)
    if not is_lattice_isometry(F.lattice, perm):
        raise ValueError("permutation is not a lattice isometry")
    if F.is_local and F.jet_order > 0:
        # gradient components would need rotating along with the sites
        raise ValueError("pullback of jet-valued local functionals is limited to jet order 0")

    inverse = np.argsort(perm)
    kernels = {}
    for k, kernel in F.kernels.items():
        if F.is_local:
            kernels[k] = kernel[inverse]
        elif k == 0:
            kernels[k] = kernel
        else:
            kernels[k] = kernel[np.ix_(*([inverse] * k))]
    return PolynomialFunctional(F.lattice, kernels, F.locality, F.jet_order)


def conjugate(F: PolynomialFunctional) -> PolynomialFunctional:
    return PolynomialFunctional(
        F.lattice, {k: np.conj(v) for k, v in F.kernels.items()}, F.locality, F.jet_order
    )


def max_abs_difference(F: PolynomialFunctional, G: PolynomialFunctional):
    """Largest kernel entry difference (after bringing both to dense form when needed)."""
    if F.is_local and G.is_local and F.jet_order == G.jet_order:
        a, b = F, G
    else:
        a, b = to_dense(F), to_dense(G)
    degrees = set(a.kernels) | set(b.kernels)
    return max((float(np.max(np.abs(a.kernel(k) - b.kernel(k)), initial=0.0)) for k in degrees), default=0.0)
