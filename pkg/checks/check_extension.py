import numpy as np

from extension.extend import counterterm_shift, extend, fit_counterterms, refined_extension
from extension.profiles import PolynomialGaussian, radial_quadrature
from extension.radial import RadialKernel
from report.ledger import check_entry, write_csv_table

NAME = "Distribution extension"

INTEGRABLE = RadialKernel(exponent=1.5, ambient_dim=3)
MARGINAL = RadialKernel(exponent=4.0, ambient_dim=4)
HALF_EXTENT = 6.0
MARGINAL_HALF_EXTENT = 8.0


def _profiles(dim):
    return [
        PolynomialGaussian(dim, width=0.8),
        PolynomialGaussian(dim, {(0,) * dim: 1.0, (2,) + (0,) * (dim - 1): 0.5}, width=0.7),
        PolynomialGaussian(dim, {(1,) + (0,) * (dim - 1): 1.0, (0,) * dim: 0.3}, width=0.9),
    ]


def run(config, output_dir):
    tolerance = config.tolerance("extension")
    spacings = config.task.spacings or [0.4, 0.2, 0.1, 0.05]
    checks = []

    f = _profiles(3)[1]
    sweep = refined_extension(INTEGRABLE, f, spacings, HALF_EXTENT)
    oracle = radial_quadrature(INTEGRABLE, f)
    checks.append(check_entry(
        "integrable kernel vs radial quadrature", "extension below the critical degree",
        abs(sweep["limit"] - oracle) / abs(oracle), tolerance,
    ))
    write_csv_table(
        [{"spacing": a, "value": v} for a, v in zip(sweep["spacings"], sweep["values"])],
        output_dir, "extension_integrable.csv",
    )

    a = spacings[-1]
    independent = abs(
        extend(INTEGRABLE, f, a, HALF_EXTENT, weight_radius=1.0).value
        - extend(INTEGRABLE, f, a, HALF_EXTENT, weight_radius=2.0).value
    )
    checks.append(check_entry(
        "integrable kernel ignores the weight", "unique extension", independent, tolerance,
    ))

    # marginal case: changing the ball radius is a pure delta counterterm
    a = 0.25
    tests = _profiles(4)
    differences = [
        extend(MARGINAL, g, a, MARGINAL_HALF_EXTENT, weight_radius=1.0).value
        - extend(MARGINAL, g, a, MARGINAL_HALF_EXTENT, weight_radius=2.0).value
        for g in tests
    ]
    coefficients, residual = fit_counterterms(differences, tests, 0)
    predicted = counterterm_shift(MARGINAL, a, MARGINAL_HALF_EXTENT, 1.0, 2.0)
    checks.append(check_entry(
        "marginal kernel weight dependence is c f(0)", "extension ambiguity", residual, tolerance,
        coefficient=float(coefficients[(0,) * 4]),
    ))
    checks.append(check_entry(
        "counterterm matches shell sum", "extension ambiguity",
        abs(coefficients[(0,) * 4] - predicted[(0,) * 4]) / max(abs(predicted[(0,) * 4]), 1e-300), tolerance,
    ))

    return {
        "name": NAME,
        "checks": checks,
        "records_found": len(checks),
    }
