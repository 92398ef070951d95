import logging
from dataclasses import dataclass, field
from math import factorial
from typing import Dict, Optional, Tuple

import numpy as np

from extension.profiles import PolynomialGaussian, monomial_values, multi_indices, polynomial_values
from extension.radial import RadialKernel, extension_is_unique, subtraction_order
from oracle.refinement import richardson

logger = logging.getLogger(__name__)

MAX_SUBTRACTION_ORDER = 4
DECAY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class RelativePatch:
    """Cubic grid a Z^n cut to |y_i| <= half_extent, summed one slab of the first axis at a time."""

    ambient_dim: int
    spacing: float
    half_extent: float

    def __post_init__(self):
        if self.spacing <= 0 or self.half_extent <= 0:
            raise ValueError(f"patch needs positive spacing and extent, got {self.spacing}, {self.half_extent}")

    @property
    def half_count(self):
        return int(np.floor(self.half_extent / self.spacing + 1e-9))

    @property
    def ticks(self):
        M = self.half_count
        return self.spacing * np.arange(-M, M + 1)

    def slabs(self):
        ticks = self.ticks
        n = self.ambient_dim
        if n == 1:
            yield ticks[:, None]
            return
        rest = np.stack(np.meshgrid(*([ticks] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
        for x in ticks:
            yield np.column_stack([np.full(rest.shape[0], x), rest])


@dataclass(frozen=True, eq=False)
class ExtensionResult:
    """
    Pairing of an extended radial kernel with one test function.

    counterterms map multi-indices beta to a_beta; the extension pairs as
    sum_{y != 0} a^n u(y) (f(y) - w(y) T_omega f(y)) + sum_beta a_beta d^beta f(0).
    """

    kernel: RadialKernel
    value: float
    subtraction_order: int
    weight_radius: float
    patch: RelativePatch
    counterterms: Dict[Tuple[int, ...], float] = field(default_factory=dict)

    def pairing(self, f: PolynomialGaussian) -> float:
        return extend(
            self.kernel, f, self.patch.spacing, self.patch.half_extent,
            weight_radius=self.weight_radius, counterterms=self.counterterms,
        ).value


def _derivative_data(f: PolynomialGaussian, order):
    """d^beta f(0) for |beta| <= order."""
    return {beta: c * float(np.prod([factorial(b) for b in beta])) for beta, c in f.taylor(order).items()}


def extend(kernel: RadialKernel, f: PolynomialGaussian, spacing, half_extent, weight_radius=None,
           counterterms: Optional[Dict[Tuple[int, ...], float]] = None) -> ExtensionResult:
    """
    Extension of u across y = 0 by Taylor subtraction with a sharp ball weight
    (default radius: a quarter of the patch extent).
    """
    n = kernel.ambient_dim
    if f.dim != n:
        raise ValueError(f"test function has dimension {f.dim}, kernel acts in {n}")
    omega = subtraction_order(kernel)
    if omega > MAX_SUBTRACTION_ORDER:
        raise ValueError(f"subtraction order {omega} is beyond the Taylor table (max {MAX_SUBTRACTION_ORDER})")

    patch = RelativePatch(n, float(spacing), float(half_extent))
    R = patch.half_extent / 2.0 if weight_radius is None else float(weight_radius)
    taylor = f.taylor(omega)
    edge = patch.half_count * patch.spacing - 1e-9 * patch.spacing

    total = 0.0
    f_max = 0.0
    f_edge = 0.0
    for y in patch.slabs():
        r = np.sqrt(np.sum(y * y, axis=1))
        fy = f(y)
        f_max = max(f_max, float(np.max(np.abs(fy))))
        on_edge = np.max(np.abs(y), axis=1) >= edge
        if np.any(on_edge):
            f_edge = max(f_edge, float(np.max(np.abs(fy[on_edge]))))

        off = r > 0
        integrand = fy[off]
        if taylor:
            inside = r[off] < R
            integrand = integrand - np.where(inside, polynomial_values(y[off], taylor), 0.0)
        total += float(np.sum(kernel(r[off]) * integrand))

    if f_edge > DECAY_TOLERANCE * max(f_max, np.finfo(float).tiny):
        raise ValueError(
            f"test function does not decay within the lattice patch: |f| = {f_edge:.3e} at the edge"
        )

    value = total * patch.spacing ** n
    counterterms = dict(counterterms or {})
    if counterterms:
        data = _derivative_data(f, max(sum(b) for b in counterterms))
        value += sum(a * data.get(beta, 0.0) for beta, a in counterterms.items())

    return ExtensionResult(kernel, value, omega, R, patch, counterterms)


def counterterm_shift(kernel: RadialKernel, spacing, half_extent, radius_a, radius_b):
    """
    a_beta with extend(.., radius_a) - extend(.., radius_b) = sum_beta a_beta d^beta f(0):
    a_beta = -sum_{shell} u(y) y^beta / beta!, signed by which ball is larger.
    """
    omega = subtraction_order(kernel)
    if omega < 0:
        return {}
    patch = RelativePatch(kernel.ambient_dim, float(spacing), float(half_extent))
    betas = multi_indices(kernel.ambient_dim, omega)
    out = {beta: 0.0 for beta in betas}
    for y in patch.slabs():
        r = np.sqrt(np.sum(y * y, axis=1))
        sign = (r < radius_a).astype(float) - (r < radius_b).astype(float)
        shell = (r > 0) & (sign != 0)
        if not np.any(shell):
            continue
        u = kernel(r[shell]) * sign[shell]
        for beta in betas:
            out[beta] -= float(np.sum(u * monomial_values(y[shell], beta))) / float(
                np.prod([factorial(b) for b in beta])
            )
    scale = spacing ** kernel.ambient_dim
    return {beta: a * scale for beta, a in out.items()}


def fit_counterterms(differences, test_functions, order):
    """
    Least-squares fit of value differences against d^beta f(0), |beta| <= order.

    Returns (coefficients by beta, relative residual).
    """
    if len(differences) != len(test_functions):
        raise ValueError("one value difference per test function is required")
    betas = multi_indices(test_functions[0].dim, order)
    design = np.array([[_derivative_data(f, order).get(beta, 0.0) for beta in betas] for f in test_functions])
    y = np.asarray(differences, dtype=float)
    coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.linalg.norm(design @ coeffs - y) / max(np.linalg.norm(y), np.finfo(float).tiny))
    return dict(zip(betas, coeffs)), residual


def refined_extension(kernel: RadialKernel, f: PolynomialGaussian, spacings, half_extent, weight_radius=None):
    """
    Extension values at several spacings and their Richardson limit.

    For an integrable kernel the lattice sum misses the cell at y = 0, which
    leaves errors a^{nD - sd + 2j}; those exponents are eliminated.
    """
    values = [extend(kernel, f, a, half_extent, weight_radius).value for a in spacings]
    if not extension_is_unique(kernel):
        logger.info("subtracted extension: Richardson exponents assume a smooth remainder")
    base = kernel.ambient_dim - kernel.exponent
    exponents = [base + 2 * j for j in range(len(spacings) - 1)]
    return {"spacings": list(spacings), "values": values, "limit": richardson(values, spacings, exponents)}


def rotation_residual(kernel: RadialKernel, f: PolynomialGaussian, spacing, half_extent, permutation, signs):
    """Extended pairing of f against f composed with a signed axis permutation."""
    base = extend(kernel, f, spacing, half_extent).value
    moved = extend(kernel, f.rotated(permutation, signs), spacing, half_extent).value
    return abs(base - moved)
