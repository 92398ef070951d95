import numpy as np

from algebra.equivariant import change_of_parametrix
from algebra.star_product import involution, star_product, star_value
from background.geometry import flat_geometry
from background.lattice import build_lattice
from background.operator import elliptic_operator
from checks.fixtures import bump_smearing, workbench
from functionals.polynomial import field_smeared, max_abs_difference, pointwise_product, random_regular
from oracle.pairings import isserlis_moment
from oracle.sampler import gaussian_expectation
from parametrix.green import affine_shift, exact_green, smooth_bump_matrix
from report.ledger import check_entry

NAME = "Star product algebra"

ISSERLIS_SITES_PER_AXIS = 3


def _field_chain(fields, P):
    product = fields[0]
    for F in fields[1:]:
        product = star_product(product, F, P)
    return product


def isserlis_checks(config, tolerance):
    """phi = 0 values of chained star products of linear fields against pairing enumeration."""
    geometry = flat_geometry(2, config.background.extent[:2], mass_squared=1.0)
    lattice = build_lattice(geometry, ISSERLIS_SITES_PER_AXIS)
    G = exact_green(elliptic_operator(lattice, geometry), lattice)
    rng = np.random.default_rng(config.seed)
    vectors = rng.standard_normal((6, lattice.site_count))
    zero = np.zeros(lattice.site_count)

    entries = []
    for degree in (2, 4, 6):
        fields = [field_smeared(lattice, v) for v in vectors[:degree]]
        engine = star_value(_field_chain(fields[:-1], G), fields[-1], G, zero)
        oracle = isserlis_moment(G.kernel, vectors[:degree], lattice.volume_weight)
        entries.append(check_entry(
            f"star chain of {degree} fields at phi=0", "Gaussian pairing oracle",
            abs(engine - oracle), tolerance,
        ))

        pointwise = fields[0]
        for F in fields[1:]:
            pointwise = pointwise_product(pointwise, F)
        entries.append(check_entry(
            f"exp[Upsilon_G] of {degree}-fold product", "Gaussian pairing oracle",
            abs(gaussian_expectation(pointwise, G.kernel) - oracle), tolerance,
        ))
    return entries


def run(config, output_dir):
    bench = workbench(config)
    lattice, P = bench.lattice, bench.P
    rng = np.random.default_rng(config.seed)

    F = random_regular(lattice, 2, rng)
    G = random_regular(lattice, 1, rng)
    H = random_regular(lattice, 1, rng)

    S = smooth_bump_matrix(lattice, bump_smearing(lattice), amplitude=0.05)
    Q = affine_shift(P, S)
    R = affine_shift(P, -0.5 * S)

    exact = config.tolerance("exact")
    checks = [
        check_entry(
            "commutativity", "algebra product", max_abs_difference(star_product(F, G, P), star_product(G, F, P)),
            config.tolerance("algebraic"),
        ),
        check_entry(
            "associativity", "algebra product",
            max_abs_difference(star_product(star_product(F, G, P), H, P), star_product(F, star_product(G, H, P), P)),
            config.tolerance("associativity"),
        ),
        check_entry(
            "alpha homomorphism", "change of parametrix",
            max_abs_difference(
                change_of_parametrix(star_product(F, G, Q), Q, P),
                star_product(change_of_parametrix(F, Q, P), change_of_parametrix(G, Q, P), P),
            ),
            config.tolerance("algebraic"),
        ),
        check_entry(
            "alpha cocycle", "change of parametrix",
            max_abs_difference(
                change_of_parametrix(change_of_parametrix(F, R, Q), Q, P),
                change_of_parametrix(F, R, P),
            ),
            config.tolerance("algebraic"),
        ),
        check_entry(
            "involution reverses products", "involution",
            max_abs_difference(involution(star_product(F, G, P)), star_product(involution(G), involution(F), P)),
            exact,
        ),
    ]
    checks.extend(isserlis_checks(config, exact))

    return {
        "name": NAME,
        "checks": checks,
        "records_found": len(checks),
    }
