from dataclasses import dataclass
from math import ceil, comb, factorial, log

import numpy as np
from scipy import integrate
from scipy.special import gamma

from parametrix.hadamard import hadamard_coefficients, leading_coefficient


@dataclass(frozen=True)
class RadialKernel:
    """u(y) = amplitude |y|^-alpha log^m |y| for y != 0 in `ambient_dim` relative dimensions."""

    exponent: float
    log_power: int = 0
    amplitude: float = 1.0
    ambient_dim: int = 3

    def __post_init__(self):
        if self.exponent < 0:
            raise ValueError(f"radial exponent must be >= 0, got {self.exponent}")
        if self.log_power < 0:
            raise ValueError(f"log power must be >= 0, got {self.log_power}")
        if self.ambient_dim < 1:
            raise ValueError(f"ambient dimension must be >= 1, got {self.ambient_dim}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        values = self.amplitude * safe ** (-self.exponent)
        if self.log_power:
            values = values * np.log(safe) ** self.log_power
        return np.where(r > 0, values, 0.0)


def scaling_degree(kernel: RadialKernel) -> float:
    return float(kernel.exponent)


def extension_is_unique(kernel: RadialKernel) -> bool:
    return scaling_degree(kernel) < kernel.ambient_dim


def subtraction_order(kernel: RadialKernel) -> int:
    """omega = max(ceil(sd) - nD, -1); -1 means no Taylor subtraction."""
    return max(int(ceil(scaling_degree(kernel))) - kernel.ambient_dim, -1)


# ------------------------------------------------------------
# leading singular part of Hadamard powers
# ------------------------------------------------------------

def hadamard_power_terms(dim, power, nu):
    """
    Leading singular part of H^n on a flat massless background as radial terms in r = sqrt(2 sigma).

    D = 2 gives V_0^n (2 log r - log 2 nu^2)^n; D >= 3 gives (U_0 2^{(D-2)/2})^n r^{-n(D-2)}.
    """
    if power < 1:
        raise ValueError(f"Hadamard power must be >= 1, got {power}")
    if dim == 2:
        U, V = hadamard_coefficients(2, 0.0, 0)
        V0 = float(V[0])
        shift = -log(2.0 * nu ** 2)
        return [
            RadialKernel(0.0, j, V0 ** power * comb(power, j) * 2.0 ** j * shift ** (power - j), 2)
            for j in range(power + 1)
        ]
    amplitude = (leading_coefficient(dim) * 2.0 ** ((dim - 2) / 2.0)) ** power
    return [RadialKernel(float(power * (dim - 2)), 0, amplitude, dim)]


def _face_integral(func, dim):
    """Integral over the face z_1 = 1/2, |z_i| <= 1/2 of the unit cube."""
    if dim == 1:
        return float(func(np.array([0.5])))
    bounds = [(-0.5, 0.5)] * (dim - 1)
    value, _ = integrate.nquad(lambda *zs: func(np.array((0.5,) + zs)), bounds)
    return value


def cell_average(terms, dim, spacing):
    """
    (1 / a^D) integral over the cube [-a/2, a/2]^D of sum_terms u(|y|).

    The cube splits into 2D pyramids over its faces; along each ray the
    t-integral is done in closed form, the face integral numerically.
    """
    total = 0.0
    for u in terms:
        p = dim - u.exponent
        if p <= 0:
            raise ValueError(f"r^-{u.exponent} is not integrable over a cell in {dim} dimensions")
        log_a = log(spacing)

        def on_face(z, u=u, p=p):
            rz = float(np.linalg.norm(z))
            # log(a t |z|)^m expanded in log t; int_0^1 t^{p-1} log^j t dt = (-1)^j j! / p^{j+1}
            inner = 0.0
            for j in range(u.log_power + 1):
                rest = (log_a + log(rz)) ** (u.log_power - j)
                inner += comb(u.log_power, j) * rest * (-1) ** j * factorial(j) / p ** (j + 1)
            return rz ** (-u.exponent) * inner

        total += u.amplitude * spacing ** (-u.exponent) * dim * _face_integral(on_face, dim)
    return total


def angular_moment(beta):
    """Integral over the unit sphere of theta^beta."""
    beta = np.asarray(beta, dtype=int)
    if np.any(beta % 2):
        return 0.0
    n = beta.size
    return 2.0 * float(np.prod(gamma((beta + 1) / 2.0))) / float(gamma((beta.sum() + n) / 2.0))
