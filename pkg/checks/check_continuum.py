import logging

import numpy as np

from algebra.scaling import fit_almost_homogeneous, rescaled_observable_S
from background.family import bump
from background.geometry import flat_geometry, scale_background
from background.lattice import build_lattice
from background.operator import elliptic_operator
from checks.fixtures import bump_smearing, random_field
from oracle.refinement import fit_log_divergence, summarize_sweep
from parametrix.green import default_reference_length, exact_green
from parametrix.hadamard import hadamard_kernel
from parametrix.smooth_part import homogeneous_coincidence, smooth_part
from report.ledger import check_entry, write_csv_table
from wick.leibniz import leibniz_check
from wick.powers import wick_observable

logger = logging.getLogger(__name__)

NAME = "Continuum and scaling"

SWEEP_EXTENT = 4.0
SWEEP_SITES = [8, 16, 32]
SCALING_SITES = 8
SCALING_LAMBDAS = [0.5, 0.7, 1.0, 1.4, 2.0, 2.8]
LEIBNIZ_SITES = [8, 16]
# D = 4 goes through the FFT coincidence, no dense kernels
LOG_SCALING_SITES = 16


def _nu(config, dim):
    return config.parametrix.nu or default_reference_length([SWEEP_EXTENT] * dim)


def coincidence_sweep(dim, config):
    """G(x, x) and [W_G] on a homogeneous torus at each resolution."""
    geometry = flat_geometry(dim, SWEEP_EXTENT, mass_squared=1.0)
    rows = []
    for n in SWEEP_SITES:
        W, G_diag = homogeneous_coincidence(
            geometry, n, config.parametrix.order, _nu(config, dim),
            order=config.parametrix.fit_order,
        )
        rows.append({"dim": dim, "sites_per_axis": n, "spacing": SWEEP_EXTENT / n, "G_diag": G_diag, "W": W})
        logger.debug(f"D={dim} n={n}: G(0,0)={G_diag:.6e} [W]={W:.6e}")
    return rows


def wick_scaling_builder(k, config, nu):
    def build(geometry, lattice, f):
        G = exact_green(elliptic_operator(lattice, geometry), lattice, nu)
        H = hadamard_kernel(geometry, lattice, config.parametrix.order, nu)
        return wick_observable(k, f, G, smooth_part(G, H, order=config.parametrix.fit_order))
    return build


def wick_square_scaling(config, dim=4):
    """
    :phi^2:(f) at phi = 0 on h_lambda is [W_G][h_lambda] times the integral of f,
    so its scaling is the one of the coincidence limit with nu held fixed.
    """
    geometry = flat_geometry(dim, SWEEP_EXTENT, mass_squared=1.0)
    nu = _nu(config, dim)
    values = [
        homogeneous_coincidence(
            scale_background(geometry, lam), LOG_SCALING_SITES, config.parametrix.order, nu,
            order=config.parametrix.fit_order,
        )[0]
        for lam in SCALING_LAMBDAS
    ]
    return fit_almost_homogeneous(SCALING_LAMBDAS, values)


def leibniz_residual(config, n):
    """k = 2 forward-difference Leibniz residual on a D = 2 torus for fixed continuum profiles f, X and phi."""
    geometry = flat_geometry(2, SWEEP_EXTENT, mass_squared=1.0)
    lattice = build_lattice(geometry, n)
    G = exact_green(elliptic_operator(lattice, geometry), lattice)
    H = hadamard_kernel(geometry, lattice, config.parametrix.order, G.ref_length_nu)
    W = smooth_part(G, H, order=config.parametrix.fit_order)

    center = [n // 2, n // 2]
    f = bump(lattice, center, 0.35 * SWEEP_EXTENT)
    X = np.zeros((lattice.site_count, 2))
    X[:, 0] = bump(lattice, center, 0.3 * SWEEP_EXTENT)
    x = lattice.coordinates
    phi = np.sin(2 * np.pi * x[:, 0] / SWEEP_EXTENT) + 0.5 * np.cos(2 * np.pi * x[:, 1] / SWEEP_EXTENT)
    return leibniz_check(2, f, X, W, phi, stencil="forward")


def run(config, output_dir):
    checks = []

    rows = coincidence_sweep(3, config)
    spacings = [r["spacing"] for r in rows]
    divergence = summarize_sweep(spacings, [r["G_diag"] for r in rows])
    checks.append(check_entry(
        "G(x,x) diverges like 1/a in D=3", "continuum divergence of the Green kernel",
        abs(divergence["rate"] + 1.0), config.tolerance("divergence_rate"), rate=divergence["rate"],
    ))
    convergence = summarize_sweep(spacings, [r["W"] for r in rows])
    checks.append(check_entry(
        "[W] converges in D=3", "coincidence limit of the smooth part",
        convergence["rate"], 0.0, passed=convergence["rate"] > 0, limit=convergence["limit"],
    ))

    planar = coincidence_sweep(2, config)
    log_fit = fit_log_divergence([r["spacing"] for r in planar], [r["G_diag"] for r in planar])
    checks.append(check_entry(
        "G(x,x) diverges like log(1/a) in D=2", "continuum divergence of the Green kernel",
        log_fit["r_squared"], config.tolerance("log_r2"), passed=log_fit["r_squared"] > config.tolerance("log_r2"),
        slope=log_fit["slope"],
    ))
    write_csv_table(rows + planar, output_dir, "continuum_sweep.csv")

    coarse, fine = (leibniz_residual(config, n) for n in LEIBNIZ_SITES)
    ratio = coarse / fine
    checks.append(check_entry(
        "Leibniz residual halves with the spacing k=2", "Leibniz rule for Wick powers",
        abs(ratio / 2.0 - 1.0), config.tolerance("leibniz_ratio"), coarse=coarse, fine=fine,
    ))

    # odd D: no log terms, so :phi^k: scales exactly with k (D - 2) / 2
    geometry = flat_geometry(3, SWEEP_EXTENT, mass_squared=1.0)
    lattice = build_lattice(geometry, SCALING_SITES)
    f = bump_smearing(lattice)
    phi = random_field(lattice, np.random.default_rng(config.seed))
    nu = _nu(config, 3)
    for k in (1, 2):
        values = [
            rescaled_observable_S(wick_scaling_builder(k, config, nu), geometry, SCALING_SITES, f, lam, phi=phi)
            for lam in SCALING_LAMBDAS
        ]
        fit = fit_almost_homogeneous(SCALING_LAMBDAS, np.real(values))
        expected = k * (geometry.dim - 2) / 2.0
        checks.append(check_entry(
            f"scaling dimension of :phi^{k}: in D=3", "almost homogeneous scaling",
            abs(fit["kappa"] - expected), config.tolerance("scaling_dimension"),
            kappa=fit["kappa"], log_degree=fit["log_degree"],
        ))

    # even D: the log(sigma / nu^2) term leaves a log lambda in the scaling
    fit = wick_square_scaling(config)
    log_coefficient = float(np.abs(np.ravel(fit["coefficients"])[-1])) if fit["log_degree"] else 0.0
    checks.append(check_entry(
        "scaling dimension of :phi^2: in D=4", "almost homogeneous scaling",
        abs(fit["kappa"] - 2.0), config.tolerance("scaling_dimension"),
        passed=abs(fit["kappa"] - 2.0) <= config.tolerance("scaling_dimension") and 1 <= fit["log_degree"] <= 2
        and log_coefficient > 0.0,
        kappa=fit["kappa"], log_degree=fit["log_degree"], log_coefficient=log_coefficient,
    ))

    return {
        "name": NAME,
        "checks": checks,
        "records_found": len(checks),
    }
