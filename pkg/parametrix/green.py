import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from background.geometry import BackgroundGeometry
from background.lattice import LatticeSpace
from background.operator import plane_wave_symbol
from common.errors import SingularOperatorError

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-12


def default_reference_length(extent):
    """nu = extent / 2 pi (first axis)."""
    return float(np.atleast_1d(extent)[0]) / (2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class Parametrix:
    """
    Symmetric two-point kernel P(x, y) in continuum units.

    Pairings are <f, P g> = sum_xy f(x) P(x, y) g(y) mu(x) mu(y); as an operator
    P acts through the cell weight, so the exact Green kernel obeys
    E @ P * cell_weight = Id.
    """

    lattice: LatticeSpace
    kernel: np.ndarray
    ref_length_nu: float
    is_exact_green: bool = False
    label: str = ""
    background_id: Optional[str] = field(default=None)
    # accumulated smooth shift relative to the kernel the parametrix was built from
    smooth_shift: Optional[np.ndarray] = None

    def __post_init__(self):
        K = np.asarray(self.kernel)
        N = self.lattice.site_count
        if K.shape != (N, N):
            raise ValueError(f"parametrix kernel must be {N}x{N}, got {K.shape}")
        scale = max(np.abs(K).max(), 1.0)
        if np.abs(K - K.T).max() > SYMMETRY_TOLERANCE * scale:
            raise ValueError("parametrix kernel must be symmetric")
        if self.ref_length_nu <= 0:
            raise ValueError(f"reference length must be positive, got {self.ref_length_nu}")
        object.__setattr__(self, "kernel", 0.5 * (K + K.T))
        if self.background_id is None:
            object.__setattr__(self, "background_id", self.lattice.background_id)

    def pairing(self, f, g):
        mu = self.lattice.volume_weight
        return np.asarray(f) * mu @ self.kernel @ (np.asarray(g) * mu)

    def as_operator(self):
        """Matrix acting on field samples: (P f)(x) = sum_y P(x, y) f(y) cell_weight."""
        return self.kernel * self.lattice.cell_weight

    def check_same_background(self, other):
        if self.background_id != other.background_id:
            raise ValueError(
                f"parametrices live on different backgrounds: {self.background_id} vs {other.background_id}"
            )


# ------------------------------------------------------------
# Exact Green kernels
# ------------------------------------------------------------

def exact_green(E, lattice: LatticeSpace, ref_length_nu=None) -> Parametrix:
    """Unique inverse of a positive-definite E, checked by Cholesky factorization."""
    E = np.asarray(E, dtype=float)
    try:
        factor = scipy.linalg.cho_factor(E, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        smallest = float(scipy.linalg.eigvalsh(E, subset_by_index=[0, 0])[0])
        raise SingularOperatorError(
            f"E is not positive-definite: smallest eigenvalue {smallest:.6e}", eigenvalue=smallest
        )

    inverse = scipy.linalg.cho_solve(factor, np.eye(E.shape[0]))
    kernel = inverse / lattice.cell_weight

    nu = default_reference_length(lattice.extent) if ref_length_nu is None else ref_length_nu
    return Parametrix(
        lattice=lattice,
        kernel=0.5 * (kernel + kernel.T),
        ref_length_nu=nu,
        is_exact_green=True,
        label="exact-green",
    )


def spectral_green(E, lattice: LatticeSpace):
    """sum_k v_k v_k^T / lambda_k, divided by the cell weight (oracle for exact_green)."""
    eigenvalues, vectors = scipy.linalg.eigh(np.asarray(E, dtype=float))
    if eigenvalues.min() <= 0:
        raise SingularOperatorError(
            f"E has a non-positive eigenvalue {eigenvalues.min():.6e}", eigenvalue=float(eigenvalues.min())
        )
    return (vectors / eigenvalues) @ vectors.T / lattice.cell_weight


def spectral_green_column(geometry: BackgroundGeometry, sites_per_axis: int):
    """
    Column K(., 0) of the Green kernel on a homogeneous torus by FFT, shape (n,)*D.

    Works without assembling E, so refinement sweeps can go beyond the dense site cap.
    """
    symbol = plane_wave_symbol(geometry, sites_per_axis)
    smallest = float(symbol.min())
    if smallest <= 0:
        raise SingularOperatorError(
            f"E has a non-positive eigenvalue {smallest:.6e}", eigenvalue=smallest
        )
    spacing = np.asarray(geometry.extent) / sites_per_axis
    cell_weight = float(np.prod(spacing) * np.sqrt(np.linalg.det(geometry.metric)))
    return np.fft.ifftn(1.0 / symbol).real / cell_weight


def green_from_column(lattice: LatticeSpace, column):
    """Translation-invariant kernel K(x, y) = column[(y - x) mod n]."""
    column = np.asarray(column).reshape(lattice.shape)
    n = lattice.sites_per_axis
    rel = (lattice.multi_index[None, :, :] - lattice.multi_index[:, None, :]) % n
    return column[tuple(rel[..., axis] for axis in range(lattice.dim))]


# ------------------------------------------------------------
# Defect and affine structure
# ------------------------------------------------------------

def defect(E, P: Parametrix):
    """D(P) = E P - Id, with P acting as an operator."""
    E = np.asarray(E)
    return E @ P.as_operator() - np.eye(E.shape[0])


def affine_shift(P: Parametrix, S) -> Parametrix:
    """P + S for a smooth symmetric S; the singular part is untouched."""
    S = np.asarray(S)
    if S.shape != P.kernel.shape:
        raise ValueError(f"shift has shape {S.shape}, parametrix is {P.kernel.shape}")
    scale = max(np.abs(S).max(), 1.0)
    if np.abs(S - S.T).max() > SYMMETRY_TOLERANCE * scale:
        raise ValueError("affine shift must be symmetric")
    if not np.any(S):
        return P
    shift = S if P.smooth_shift is None else P.smooth_shift + S
    return replace(
        P, kernel=P.kernel + S, is_exact_green=False, label=f"{P.label}+S", smooth_shift=0.5 * (shift + shift.T)
    )


def smooth_bump_matrix(lattice: LatticeSpace, profile, amplitude=1.0):
    """Rank-1 smooth symmetric shift amplitude * b(x) b(y)."""
    b = np.asarray(profile, dtype=float)
    return amplitude * np.outer(b, b)
