import numpy as np

from checks.fixtures import bump_smearing, workbench
from parametrix.green import affine_shift, defect, smooth_bump_matrix, spectral_green
from parametrix.smooth_part import homogeneous_coincidence, smooth_part
from report.ledger import check_entry

NAME = "Parametrices"


def run(config, output_dir):
    bench = workbench(config)
    lattice, G, W = bench.lattice, bench.G, bench.W
    scale = float(np.abs(G.kernel).max())
    checks = [
        check_entry(
            "exact Green kernel has zero defect", "Green kernel",
            np.abs(defect(bench.E, G)).max(), config.tolerance("operator"),
        ),
        check_entry(
            "Green kernel matches the spectral sum", "Green kernel",
            np.abs(G.kernel - spectral_green(bench.E, lattice)).max() / scale, config.tolerance("operator"),
        ),
        check_entry(
            "coincidence limit is finite", "smooth part",
            np.abs(W.coincidence).max(), None, passed=bool(np.all(np.isfinite(W.coincidence))),
        ),
    ]

    if bench.geometry.periodic and bench.geometry.is_homogeneous:
        fft_value, _ = homogeneous_coincidence(
            bench.geometry, lattice.sites_per_axis, config.parametrix.order, G.ref_length_nu,
            order=config.parametrix.fit_order,
        )
        checks.append(check_entry(
            "coincidence limit matches the FFT column", "smooth part",
            np.abs(W.coincidence - fft_value).max(), config.tolerance("coincidence"),
        ))

    if bench.P is not G:
        checks.append(check_entry(
            "Hadamard parametrix has zero coincidence limit", "smooth part",
            np.abs(bench.W_P.coincidence).max(), config.tolerance("coincidence"),
        ))

    # smooth shifts move [W] by their diagonal and nothing else
    S = smooth_bump_matrix(lattice, bump_smearing(lattice), amplitude=0.1)
    W_shifted = smooth_part(affine_shift(G, S), bench.H, order=config.parametrix.fit_order)
    checks.append(check_entry(
        "affine shift moves [W] by diag S", "affine space of parametrices",
        np.abs(W_shifted.coincidence - W.coincidence - np.diag(S)).max(), config.tolerance("coincidence"),
    ))

    return {
        "name": NAME,
        "checks": checks,
        "records_found": len(checks),
    }
