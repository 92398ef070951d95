import logging
from dataclasses import replace

import numpy as np
from scipy.optimize import minimize_scalar

from algebra.equivariant import EquivariantObservable
from background.geometry import BackgroundGeometry, scale_background
from background.lattice import LatticeSpace, build_lattice
from common.errors import IllConditionedFitError
from functionals.polynomial import PolynomialFunctional, evaluate
from parametrix.green import Parametrix

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-10


def _check_scaled_pair(scaled_lattice: LatticeSpace, base_lattice: LatticeSpace, lam):
    if lam <= 0:
        raise ValueError(f"scale factor must be positive, got {lam}")
    if scaled_lattice.site_count != base_lattice.site_count:
        raise ValueError("scaled and base lattices must share their site layout")
    expected = lam ** (-base_lattice.dim) * base_lattice.volume_weight
    if not np.allclose(scaled_lattice.volume_weight, expected, rtol=WEIGHT_TOLERANCE, atol=0):
        raise ValueError(f"lattice weights are not related by the scale factor {lam}")


def scale_functional(F: PolynomialFunctional, lam, base_lattice: LatticeSpace) -> PolynomialFunctional:
    """
    Pull a functional on h_lambda back to h: (sigma_lambda F)(phi) = F(lambda^{(D-2)/2} phi).

    Dense kernels pick up lambda^{k(d_phi - D)} from the field factor and the
    ratio of volume weights; local densities lambda^{k d_phi - D}.
    """
    _check_scaled_pair(F.lattice, base_lattice, lam)
    D = base_lattice.dim
    d_phi = (D - 2) / 2.0

    kernels = {}
    for k, kernel in F.kernels.items():
        if F.is_local:
            kernels[k] = lam ** (k * d_phi - D) * kernel
        else:
            kernels[k] = lam ** (k * (d_phi - D)) * kernel
    return PolynomialFunctional(base_lattice, kernels, F.locality, F.jet_order)


def scale_parametrix(P: Parametrix, lam, base_lattice: LatticeSpace) -> Parametrix:
    """lambda^{-(D-2)} P: the Green kernel of lambda^2 E on h_lambda maps to the one of E on h."""
    _check_scaled_pair(P.lattice, base_lattice, lam)
    D = base_lattice.dim
    shift = None if P.smooth_shift is None else lam ** (-(D - 2)) * P.smooth_shift
    return replace(
        P,
        lattice=base_lattice,
        kernel=lam ** (-(D - 2)) * P.kernel,
        background_id=base_lattice.background_id,
        smooth_shift=shift,
    )


def scaling_map(F: EquivariantObservable, lam, base_lattice: LatticeSpace) -> EquivariantObservable:
    """sigma_lambda: observables on h_lambda -> observables on h."""
    return EquivariantObservable(
        reference=scale_parametrix(F.reference, lam, base_lattice),
        functional=scale_functional(F.functional, lam, base_lattice),
        label=F.label,
    )


def scaling_map_between(F: EquivariantObservable, lam, mu, target_lattice: LatticeSpace) -> EquivariantObservable:
    """sigma_{lambda, mu}: observables at scale mu -> observables at scale lambda."""
    if lam <= 0 or mu <= 0:
        raise ValueError(f"scale factors must be positive, got {lam}, {mu}")
    return scaling_map(F, mu / lam, target_lattice)


def rescaled_observable_S(observable, geometry: BackgroundGeometry, sites_per_axis, f, lam, phi=None):
    """
    (S_lambda O)[h](f) = sigma_lambda( O[h_lambda](lambda^D f) ).

    `observable(geometry, lattice, f)` builds the EquivariantObservable on a
    background. Returns the observable on h, or its value at phi when given.
    """
    if lam <= 0:
        raise ValueError(f"scale factor must be positive, got {lam}")
    base_lattice = build_lattice(geometry, sites_per_axis)
    scaled_geometry = scale_background(geometry, lam)
    scaled_lattice = build_lattice(scaled_geometry, sites_per_axis)

    O_scaled = observable(scaled_geometry, scaled_lattice, lam ** geometry.dim * np.asarray(f))
    rescaled = scaling_map(O_scaled, lam, base_lattice)
    if phi is None:
        return rescaled
    return evaluate(rescaled.functional, phi)


# ------------------------------------------------------------
# almost homogeneous fits
# ------------------------------------------------------------

def _design(lambdas, kappa, log_degree):
    logs = np.log(lambdas)
    return np.stack([lambdas ** kappa * logs ** j for j in range(log_degree + 1)], axis=1)


def _projected_residual(lambdas, values, kappa, log_degree):
    A = _design(lambdas, kappa, log_degree)
    coeffs, *_ = np.linalg.lstsq(A, values, rcond=None)
    residual = values - A @ coeffs
    return float(np.sqrt(np.sum(np.abs(residual) ** 2))), coeffs


def fit_almost_homogeneous(lambdas, values, max_log_degree=4, kappa_bounds=(-8.0, 8.0), tolerance=1e-8):
    """
    Least-squares fit of v(lambda) = lambda^kappa sum_{j<=m} c_j log^j lambda.

    kappa is found by variable projection (the c_j solve a linear problem for
    each trial kappa); the smallest m whose relative residual is below
    `tolerance` is returned. `values` may be (L,) or (L, M) for M observables
    sharing the same kappa.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    values = np.asarray(values)
    if values.ndim == 1:
        values = values[:, None]
    if np.any(lambdas <= 0):
        raise ValueError("scale factors must be positive")

    scale = max(float(np.max(np.abs(values))), np.finfo(float).tiny)
    normalized = values / scale

    if not np.any(normalized):
        return {"kappa": 0.0, "log_degree": 0, "coefficients": np.zeros((1, values.shape[1])), "residual": 0.0}

    best = None
    for m in range(max_log_degree + 1):
        if len(lambdas) < m + 2:
            raise IllConditionedFitError(
                f"{len(lambdas)} scale points cannot fix kappa and {m + 1} log coefficients"
            )

        grid = np.linspace(*kappa_bounds, 161)
        coarse = [_projected_residual(lambdas, normalized, k, m)[0] for k in grid]
        k0 = grid[int(np.argmin(coarse))]
        step = grid[1] - grid[0]
        result = minimize_scalar(
            lambda k: _projected_residual(lambdas, normalized, k, m)[0],
            bounds=(k0 - step, k0 + step),
            method="bounded",
            options={"xatol": 1e-13},
        )
        kappa = float(result.x)
        residual, coeffs = _projected_residual(lambdas, normalized, kappa, m)
        condition = np.linalg.cond(_design(lambdas, kappa, m))
        if condition > 1e12:
            raise IllConditionedFitError(f"almost-homogeneous fit is ill-conditioned (cond {condition:.2e})")

        candidate = {
            "kappa": kappa,
            "log_degree": m,
            "coefficients": coeffs * scale,
            "residual": residual,
        }
        if best is None or residual < best["residual"]:
            best = candidate
        if residual < tolerance:
            return candidate

    logger.warning(f"no log degree <= {max_log_degree} reached residual {tolerance}: best {best['residual']:.3e}")
    return best
