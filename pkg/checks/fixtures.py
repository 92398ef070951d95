import logging
import os
import threading
from dataclasses import dataclass

import numpy as np

from background.family import bump
from background.geometry import BackgroundGeometry
from background.lattice import LatticeSpace
from background.operator import elliptic_operator
from common import settings
from extension.diagonal import DiagonalExtension
from parametrix.green import Parametrix, affine_shift, exact_green
from parametrix.hadamard import HadamardExpansion, hadamard_kernel
from parametrix.parametrix_io import read_parametrix, write_parametrix
from parametrix.smooth_part import SmoothPart, smooth_part
from run_config.schema import RunConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Workbench:
    """
    Everything the checks derive from one background at one resolution.

    P is the configured parametrix: G itself, or the Hadamard parametrix
    G - W_G whose smooth part has a vanishing coincidence limit.
    """

    geometry: BackgroundGeometry
    lattice: LatticeSpace
    E: np.ndarray
    G: Parametrix
    H: HadamardExpansion
    W: SmoothPart
    P: Parametrix
    W_P: SmoothPart


def cached_green(E, lattice: LatticeSpace, nu=None) -> Parametrix:
    """Exact Green kernel, read from the cache directory when this background was inverted before."""
    tag = "default" if nu is None else f"{nu:.12g}"
    path = os.path.join(settings.CACHE_DIR, f"green_{lattice.background_id}_n{lattice.sites_per_axis}_{tag}.bin")
    if os.path.exists(path):
        logger.debug(f"Green kernel from cache: {path}")
        return read_parametrix(path, lattice)
    G = exact_green(E, lattice, nu)
    # checks may run in threads; publish the file in one rename
    partial = f"{path}.{os.getpid()}.{threading.get_ident()}.tmp"
    write_parametrix(G, partial)
    os.replace(partial, path)
    return G


def workbench(config: RunConfig, n=None) -> Workbench:
    geometry = config.geometry()
    lattice = config.lattice(n)
    E = elliptic_operator(lattice, geometry)
    G = cached_green(E, lattice, config.parametrix.nu)
    H = hadamard_kernel(geometry, lattice, config.parametrix.order, G.ref_length_nu)
    W = smooth_part(G, H, order=config.parametrix.fit_order)
    if config.parametrix.kind == "hadamard":
        P = affine_shift(G, -W.kernel)
        W_P = smooth_part(P, H, order=config.parametrix.fit_order)
    else:
        P, W_P = G, W
    return Workbench(geometry, lattice, E, G, H, W, P, W_P)


def bump_smearing(lattice: LatticeSpace, offset=0, radius_fraction=0.3):
    """A bump a little off the lattice centre, radius a fraction of the box."""
    center = [lattice.sites_per_axis // 2 + offset] + [lattice.sites_per_axis // 2] * (lattice.dim - 1)
    return bump(lattice, center, radius_fraction * min(lattice.extent))


def random_field(lattice: LatticeSpace, rng, scale=0.5):
    return scale * rng.standard_normal(lattice.site_count)


def coarse_extension(geometry: BackgroundGeometry, lattice: LatticeSpace, G: Parametrix, max_power=2) -> DiagonalExtension:
    """
    Extension data on a lattice too coarse for the default fit shell: the
    coincidence fit runs over the first two radii instead.
    """
    a = lattice.spacing[0] * np.sqrt(lattice.metric[0, 0])
    H = hadamard_kernel(geometry, lattice, 2, G.ref_length_nu)
    W = smooth_part(G, H, order=1, window=(a, 1.5 * a))
    return DiagonalExtension.from_parametrix(G, W, max_power)
