import numpy as np

from background.family import SmoothFamily, bump
from background.geometry import flat_geometry
from background.lattice import build_lattice
from checks.fixtures import bump_smearing
from functionals.polynomial import random_regular
from interacting.perturbative import beta_homomorphism_residual, parametrix_residual, perturbative_parametrix
from interacting.ppa import ppa_check
from parametrix.transport import reference_green
from report.ledger import check_entry, write_csv_table

NAME = "Perturbative agreement"

PPA_DIM = 3
PPA_EXTENT = 8.0
PPA_SITES_PER_AXIS = 10
SUPPORT_RADIUS = 1.0
RESIDUAL_S = [0.02, 0.04, 0.08]


def mass_family(config):
    """
    The configured family when it is a mass or gauge variation, otherwise a
    bump in c on a D = 3 torus with sites left off its one-link neighborhood.
    """
    fam = config.background.family
    if fam is not None and fam.kind != "conformal":
        return config.family(config.lattice())
    geometry = flat_geometry(PPA_DIM, [PPA_EXTENT] * PPA_DIM, mass_squared=1.0)
    lattice = build_lattice(geometry, PPA_SITES_PER_AXIS)
    profile = bump(lattice, [PPA_SITES_PER_AXIS // 2] * PPA_DIM, SUPPORT_RADIUS, amplitude=0.5)
    return SmoothFamily(geometry, lattice, profile != 0.0, c_terms={1: profile})


def run(config, output_dir):
    family = mass_family(config)
    lattice = family.lattice
    P = reference_green(family, 0.0, config.parametrix.nu)
    order = min(config.task.s_order, 2)
    checks = []

    series = perturbative_parametrix(P, family, order)
    residual = parametrix_residual(series, family, RESIDUAL_S)
    checks.append(check_entry(
        f"perturbative parametrix residual exponent (order {order})", "perturbative parametrix",
        abs(residual["slope"] - (order + 1)) if residual["slope"] is not None else None,
        config.tolerance("residual_exponent"), slope=residual["slope"],
    ))
    write_csv_table(
        [{"s": s, "residual": r} for s, r in zip(residual["s"], residual["residual"])],
        output_dir, "parametrix_residual.csv",
    )

    rng = np.random.default_rng(config.seed)
    F, G = random_regular(lattice, 1, rng), random_regular(lattice, 1, rng)
    checks.append(check_entry(
        "beta_s is a homomorphism to first order", "beta map",
        beta_homomorphism_residual(F, G, perturbative_parametrix(P, family, 1)), config.tolerance("homomorphism"),
    ))

    f = bump_smearing(lattice, radius_fraction=0.4)
    step = config.task.step
    k = max(2, min(config.task.k, 4))
    report = ppa_check(k, f, family, config.parametrix.order, P.ref_length_nu, step=step,
                       fit_order=config.parametrix.fit_order)
    checks.append(check_entry(
        f"residual sites off the support neighborhood k={k}", "support of the agreement residual",
        report["outside_sites"], 0, passed=report["outside_sites"] > 0,
    ))
    checks.append(check_entry(
        f"oracle residual vanishes off support k={k}", "support of the agreement residual",
        report["oracle_outside_support"], config.tolerance("ppa_locality"),
    ))
    checks.append(check_entry(
        f"transported residual vanishes off support k={k}", "principle of perturbative agreement",
        report["max_outside_support"], config.tolerance("ppa_transported"),
        integrated_residual=report["integrated_residual"],
    ))
    checks.append(check_entry(
        f"residual density vs spectral oracle k={k}", "principle of perturbative agreement",
        report["oracle_difference"], config.tolerance("ppa_oracle"),
    ))

    return {
        "name": NAME,
        "checks": checks,
        "records_found": len(checks),
    }
