import logging

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

GEOMETRIC_TOLERANCE = 1e-9


def richardson(values, spacings, exponents):
    """
    Limit L of v(a) = L + sum_j c_j a^{p_j} from len(exponents) + 1 samples.
    """
    values = np.asarray(values)
    spacings = np.asarray(spacings, dtype=float)
    if len(values) != len(exponents) + 1:
        raise ValueError(f"{len(values)} samples cannot eliminate {len(exponents)} error terms")
    design = np.column_stack([np.ones_like(spacings)] + [spacings ** p for p in exponents])
    solution = np.linalg.solve(design, values)
    return solution[0]


def _check_geometric(spacings):
    spacings = np.asarray(spacings, dtype=float)
    if spacings.size < 3:
        raise ValueError(f"refinement sweeps need at least 3 spacings, got {spacings.size}")
    ratios = spacings[:-1] / spacings[1:]
    if np.any(ratios <= 1.0) or np.ptp(ratios) > GEOMETRIC_TOLERANCE * ratios[0]:
        raise ValueError(f"spacings must shrink in geometric progression, got {spacings.tolist()}")
    return spacings, float(ratios[0])


def refinement_sweep(evaluator, spacings):
    """
    Evaluate a quantity along a refinement and fit |q(a) - q(a/r)| ~ a^rate.

    Positive rates converge, with the limit extrapolated from the last two
    points; negative rates diverge like a^rate and report no limit.
    """
    spacings, ratio = _check_geometric(spacings)
    values = np.array([evaluator(a) for a in spacings], dtype=float)
    return summarize_sweep(spacings, values, ratio)


def summarize_sweep(spacings, values, ratio=None):
    spacings = np.asarray(spacings, dtype=float)
    values = np.asarray(values, dtype=float)
    if ratio is None:
        spacings, ratio = _check_geometric(spacings)

    differences = values[:-1] - values[1:]
    monotone = bool(np.all(differences > 0) or np.all(differences < 0))
    if not monotone:
        logger.warning(f"refinement data is not monotone: {values.tolist()}")

    magnitude = np.abs(differences)
    if np.any(magnitude == 0):
        return {"spacings": spacings.tolist(), "values": values.tolist(), "rate": np.inf,
                "limit": float(values[-1]), "residual": 0.0, "monotone": monotone}

    fit = stats.linregress(np.log(spacings[1:]), np.log(magnitude))
    rate = float(fit.slope)
    limit = None
    if rate > 0:
        limit = float(values[-1] - differences[-1] / (ratio ** rate - 1.0))
    predicted = fit.intercept + fit.slope * np.log(spacings[1:])
    residual = float(np.sqrt(np.mean((np.log(magnitude) - predicted) ** 2)))
    return {
        "spacings": spacings.tolist(),
        "values": values.tolist(),
        "rate": rate,
        "limit": limit,
        "residual": residual,
        "monotone": monotone,
    }


def fit_log_divergence(spacings, values):
    """q(a) = slope log(1/a) + intercept; returns slope, intercept and R^2."""
    spacings = np.asarray(spacings, dtype=float)
    fit = stats.linregress(np.log(1.0 / spacings), np.asarray(values, dtype=float))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue ** 2)}
