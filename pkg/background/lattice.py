import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from background.geometry import BackgroundGeometry, SUPPORTED_KINDS
from common import settings
from common.errors import LatticeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LatticeSpace:
    """Uniform lattice discretizing the box of a background geometry."""

    dim: int
    sites_per_axis: int
    spacing: Tuple[float, ...]
    extent: Tuple[float, ...]
    periodic: Tuple[bool, ...]
    coordinates: np.ndarray      # (N, D)
    multi_index: np.ndarray      # (N, D) integer site labels
    volume_weight: np.ndarray    # (N,)
    cell_weight: float           # a^D sqrt(det g) of the geometry the lattice was built from
    metric: np.ndarray
    background_id: str

    @property
    def site_count(self):
        return self.coordinates.shape[0]

    @property
    def shape(self):
        return (self.sites_per_axis,) * self.dim

    @property
    def total_volume(self):
        return float(self.volume_weight.sum())

    # ------------------------------------------------------------

    def flat_index(self, multi):
        return int(np.ravel_multi_index(tuple(np.asarray(multi) % self.sites_per_axis), self.shape))

    def neighbor(self, axis, step=1):
        """
        Index array nb with phi[nb] = phi(x + step*e_axis).

        For non-periodic axes, sites whose neighbor falls outside carry -1.
        """
        shifted = self.multi_index.copy()
        shifted[:, axis] += step
        n = self.sites_per_axis
        outside = (shifted[:, axis] < 0) | (shifted[:, axis] >= n)
        shifted[:, axis] %= n
        nb = np.ravel_multi_index(tuple(shifted.T), self.shape)
        if not self.periodic[axis]:
            nb = np.where(outside, -1, nb)
        return nb

    def displacements_from(self, site):
        """Minimal-image coordinate displacements y - x for every site y, shape (N, D)."""
        delta = self.coordinates - self.coordinates[site]
        for axis in range(self.dim):
            if self.periodic[axis]:
                L = self.extent[axis]
                delta[:, axis] -= L * np.round(delta[:, axis] / L)
        return delta

    def sigma_from(self, site):
        """Halved squared geodesic distance sigma(x, .) for the constant metric."""
        delta = self.displacements_from(site)
        return 0.5 * np.einsum("ni,ij,nj->n", delta, self.metric, delta)

    def sigma_table(self):
        """Full (N, N) table of sigma; minimal image on periodic axes."""
        N = self.site_count
        sigma = np.zeros((N, N))
        for i in range(self.dim):
            di = self._axis_displacement(i)
            for j in range(self.dim):
                gij = self.metric[i, j]
                if gij == 0.0:
                    continue
                dj = di if i == j else self._axis_displacement(j)
                sigma += 0.5 * gij * di * dj
        return sigma

    def _axis_displacement(self, axis):
        x = self.coordinates[:, axis]
        delta = x[None, :] - x[:, None]
        if self.periodic[axis]:
            L = self.extent[axis]
            delta -= L * np.round(delta / L)
        return delta

    def translation(self, shift):
        """Permutation perm with (phi o tau)[x] = phi[perm[x]] for the translation x -> x + shift."""
        if not all(self.periodic):
            raise LatticeError("translations are lattice isometries only on the torus")
        shifted = (self.multi_index + np.asarray(shift, dtype=int)) % self.sites_per_axis
        return np.ravel_multi_index(tuple(shifted.T), self.shape)

    def reflection(self, axis):
        """Permutation for x_axis -> -x_axis (mod n)."""
        if not self.periodic[axis]:
            raise LatticeError("reflections are used on periodic axes only")
        reflected = self.multi_index.copy()
        reflected[:, axis] = (-reflected[:, axis]) % self.sites_per_axis
        return np.ravel_multi_index(tuple(reflected.T), self.shape)

    def check_compatible(self, other):
        if self.site_count != other.site_count or self.spacing != other.spacing:
            raise LatticeError(
                f"lattice mismatch: {self.site_count} sites / spacing {self.spacing} "
                f"vs {other.site_count} sites / spacing {other.spacing}"
            )


def build_lattice(geometry: BackgroundGeometry, sites_per_axis: int) -> LatticeSpace:
    if sites_per_axis < 2:
        raise LatticeError(f"sites_per_axis must be >= 2, got {sites_per_axis}")

    if geometry.kind not in SUPPORTED_KINDS:
        raise LatticeError(f"unsupported geometry kind {geometry.kind!r}")

    N = sites_per_axis ** geometry.dim
    if N > settings.MAX_SITES:
        smaller = int(np.floor(settings.MAX_SITES ** (1.0 / geometry.dim)))
        raise LatticeError(
            f"{N} sites exceed the cap of {settings.MAX_SITES}; use sites_per_axis <= {smaller}"
        )

    spacing = tuple(L / sites_per_axis for L in geometry.extent)
    shape = (sites_per_axis,) * geometry.dim

    multi_index = np.stack(
        [ix.ravel() for ix in np.indices(shape)], axis=1
    ).astype(int)
    coordinates = multi_index * np.asarray(spacing)

    cell_weight = float(np.prod(spacing) * np.sqrt(np.linalg.det(geometry.metric)))
    omega = geometry.conformal_field(N)
    volume_weight = cell_weight * omega ** (geometry.dim / 2.0)

    periodic = (geometry.periodic,) * geometry.dim

    logger.debug(f"lattice built: D={geometry.dim}, n={sites_per_axis}, N={N}, a={spacing}")

    return LatticeSpace(
        dim=geometry.dim,
        sites_per_axis=sites_per_axis,
        spacing=spacing,
        extent=geometry.extent,
        periodic=periodic,
        coordinates=coordinates,
        multi_index=multi_index,
        volume_weight=volume_weight,
        cell_weight=cell_weight,
        metric=geometry.metric,
        background_id=geometry.background_id,
    )
