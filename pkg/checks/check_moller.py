import numpy as np

from background.geometry import flat_geometry
from background.lattice import build_lattice
from background.operator import elliptic_operator
from checks.fixtures import coarse_extension, bump_smearing
from functionals.polynomial import constant, field_smeared, local_monomial, max_abs_difference, pointwise_product
from interacting.moller import (
    InteractionTerm,
    born_term,
    intertwiner_residual,
    moller_covariance_residual,
    moller_map,
)
from interacting.series import FormalSeries
from oracle.sampler import GaussianSampler, connected_first_order
from parametrix.green import affine_shift, exact_green, smooth_bump_matrix
from report.ledger import check_entry, write_csv_table

NAME = "Moller map"

# dense lambda^2 coefficients grow like N^(deg F + 4)
MOLLER_SITES_PER_AXIS = 4
COUNTERTERM = 0.1


def run(config, output_dir):
    geometry = flat_geometry(2, min(config.background.extent[:2]), mass_squared=1.0)
    lattice = build_lattice(geometry, MOLLER_SITES_PER_AXIS)
    E = elliptic_operator(lattice, geometry)
    G = exact_green(E, lattice)
    extension = coarse_extension(geometry, lattice, G)
    order = min(config.task.lambda_order, 2)
    tolerance = config.tolerance("moller")

    rho = bump_smearing(lattice, radius_fraction=0.35)
    V = InteractionTerm.mass_term(lattice, rho)
    f = bump_smearing(lattice, offset=1, radius_fraction=0.35)
    F = field_smeared(lattice, f)
    P = affine_shift(G, smooth_bump_matrix(lattice, bump_smearing(lattice, offset=-1), amplitude=0.05))

    checks = []
    free = moller_map(F, V.functional.scaled(0.0), P, G, order, extension)
    checks.append(check_entry(
        "V = 0 leaves F unchanged", "Moller map",
        free.max_abs_difference(FormalSeries("lambda", {0: F}, order)), config.tolerance("exact"),
    ))

    series = moller_map(F, V.functional, P, G, order, extension)
    checks.append(check_entry(
        "first order is the Born term", "Moller map", max_abs_difference(series[1], born_term(f, rho, G)), tolerance,
    ))
    checks.append(check_entry(
        "intertwiner identity", "intertwiner between E and E_V",
        intertwiner_residual(f, rho, E, P, G, order, extension), tolerance,
    ))
    Q = affine_shift(P, smooth_bump_matrix(lattice, bump_smearing(lattice, offset=2), amplitude=0.03))
    checks.append(check_entry(
        "equivariance across parametrices", "Moller map covariance",
        moller_covariance_residual(F, V, P, Q, G, order, extension), tolerance,
    ))

    # a counterterm in [H^2] moves R_V of a local square by the constant sum mu a_0 rho f at lambda^1
    square = local_monomial(lattice, 2, f)
    base = moller_map(square, V.functional, P, G, 1, extension)
    moved = moller_map(square, V.functional, P, G, 1, extension.with_counterterm(2, COUNTERTERM))
    predicted = COUNTERTERM * float(np.sum(lattice.volume_weight * rho * f))
    checks.append(check_entry(
        "extension counterterm shifts R_V by a local term", "renormalization freedom of the Moller map",
        max_abs_difference(moved[1] - base[1], constant(lattice, predicted)), tolerance, predicted=predicted,
    ))

    # order-lambda two-point function against the sampled perturbed Gaussian
    g = bump_smearing(lattice, offset=-1, radius_fraction=0.35)
    two_point = pointwise_product(F, field_smeared(lattice, g))
    first = moller_map(two_point, V.functional, G, G, 1, extension)
    engine = first.evaluate(np.zeros(lattice.site_count))[1]
    mean, stderr = connected_first_order(
        GaussianSampler(G.kernel, rng_seed=config.seed), two_point, V.functional, config.task.samples,
    )
    sigmas = abs(mean - engine) / stderr
    checks.append(check_entry(
        "order-lambda two-point function vs Monte Carlo", "perturbed Gaussian measure",
        sigmas, config.tolerance("mc_sigma"), mean=float(mean), stderr=float(stderr), engine=float(engine),
        seed=config.seed,
    ))

    write_csv_table(
        [{"order": n, "value_at_zero": v} for n, v in series.evaluate(np.zeros(lattice.site_count)).items()],
        output_dir, "moller_coefficients.csv",
    )
    return {
        "name": NAME,
        "checks": checks,
        "records_found": len(checks),
    }
