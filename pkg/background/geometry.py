import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np


SUPPORTED_KINDS = ("flat-torus", "flat-patch")


@dataclass(frozen=True, eq=False)
class BackgroundGeometry:
    """
    Background data h = (g, A, c) on a flat D-dimensional box.

    The metric is a constant symmetric matrix; `conformal` optionally carries a
    per-site factor Omega(x) so that g(x) = Omega(x) * metric (only produced by
    smooth families). `covector_A` is either a constant D-vector or per-site
    (N, D) samples, `scalar_c` a constant or per-site (N,) samples.
    """

    dim: int
    kind: str
    extent: Tuple[float, ...]
    metric: np.ndarray = field(default=None)
    covector_A: np.ndarray = field(default=None)
    scalar_c: object = 0.0
    conformal: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dimension must be >= 2, got {self.dim}")

        if self.kind not in SUPPORTED_KINDS:
            raise ValueError(
                f"unsupported geometry kind {self.kind!r}; expected one of {SUPPORTED_KINDS}"
            )

        extent = tuple(float(x) for x in self.extent)
        if len(extent) != self.dim or any(x <= 0 for x in extent):
            raise ValueError(f"extent must hold {self.dim} positive lengths, got {self.extent}")
        object.__setattr__(self, "extent", extent)

        metric = np.eye(self.dim) if self.metric is None else np.asarray(self.metric, dtype=float)
        if metric.shape != (self.dim, self.dim):
            raise ValueError(f"metric must be {self.dim}x{self.dim}, got {metric.shape}")
        if not np.allclose(metric, metric.T, rtol=0, atol=1e-14):
            raise ValueError("metric must be symmetric")
        if np.linalg.eigvalsh(metric).min() <= 0:
            raise ValueError("metric must be positive-definite")
        object.__setattr__(self, "metric", metric)

        A = np.zeros(self.dim) if self.covector_A is None else np.asarray(self.covector_A, dtype=float)
        if A.shape[-1] != self.dim or A.ndim > 2:
            raise ValueError(f"covector_A must have trailing dimension {self.dim}, got {A.shape}")
        object.__setattr__(self, "covector_A", A)

        c = self.scalar_c
        if np.ndim(c) == 0:
            c = float(c)
        else:
            c = np.asarray(c, dtype=float)
        object.__setattr__(self, "scalar_c", c)

        if self.conformal is not None:
            omega = np.asarray(self.conformal, dtype=float)
            if np.any(omega <= 0):
                raise ValueError("conformal factor must be positive at every site")
            object.__setattr__(self, "conformal", omega)

    # ------------------------------------------------------------

    @property
    def periodic(self):
        return self.kind == "flat-torus"

    @property
    def is_homogeneous(self):
        return (
            self.conformal is None
            and np.ndim(self.scalar_c) == 0
            and self.covector_A.ndim == 1
        )

    @property
    def mass_squared(self):
        """Constant c, or None when c varies over the lattice."""
        if np.ndim(self.scalar_c) == 0:
            return float(self.scalar_c)
        values = np.asarray(self.scalar_c)
        if np.all(values == values.flat[0]):
            return float(values.flat[0])
        return None

    def c_field(self, site_count):
        c = self.scalar_c
        if np.ndim(c) == 0:
            return np.full(site_count, float(c))
        if c.shape != (site_count,):
            raise ValueError(f"scalar_c has {c.shape} samples, lattice has {site_count} sites")
        return c

    def A_field(self, site_count):
        A = self.covector_A
        if A.ndim == 1:
            return np.tile(A, (site_count, 1))
        if A.shape != (site_count, self.dim):
            raise ValueError(f"covector_A has shape {A.shape}, expected ({site_count}, {self.dim})")
        return A

    def conformal_field(self, site_count):
        if self.conformal is None:
            return np.ones(site_count)
        if self.conformal.shape != (site_count,):
            raise ValueError(f"conformal factor has {self.conformal.shape} samples, lattice has {site_count}")
        return self.conformal

    @property
    def background_id(self):
        digest = hashlib.sha1()
        digest.update(f"{self.dim}|{self.kind}|{self.extent}".encode())
        for arr in (self.metric, self.covector_A, np.asarray(self.scalar_c, dtype=float)):
            digest.update(np.ascontiguousarray(arr).tobytes())
        if self.conformal is not None:
            digest.update(np.ascontiguousarray(self.conformal).tobytes())
        return digest.hexdigest()[:16]


def engineering_dimensions(dim):
    """Engineering dimensions (d_phi, d_A, d_c) making the Lagrangian density scale invariant."""
    if dim < 2:
        raise ValueError(f"dimension must be >= 2, got {dim}")
    return {"d_phi": (dim - 2) / 2.0, "d_A": 0.0, "d_c": 2.0}


def scale_background(geometry: BackgroundGeometry, lam: float) -> BackgroundGeometry:
    """h -> h_lambda = (lambda^-2 g, A, lambda^2 c)."""
    if lam <= 0:
        raise ValueError(f"scale factor must be positive, got {lam}")

    c = geometry.scalar_c
    scaled_c = lam ** 2 * c if np.ndim(c) == 0 else lam ** 2 * np.asarray(c)

    return replace(
        geometry,
        metric=geometry.metric / lam ** 2,
        scalar_c=scaled_c,
    )


def flat_geometry(dim, extent, mass_squared=0.0, kind="flat-torus", covector_A=None, metric=None):
    """Convenience constructor used by configs and tests."""
    if np.ndim(extent) == 0:
        extent = (float(extent),) * dim
    return BackgroundGeometry(
        dim=dim,
        kind=kind,
        extent=tuple(extent),
        metric=metric,
        covector_A=covector_A,
        scalar_c=mass_squared,
    )
