import numpy as np

from algebra.contraction import pair_coefficient
from checks.fixtures import bump_smearing, random_field, workbench
from parametrix.green import affine_shift, smooth_bump_matrix
from parametrix.smooth_part import smooth_part
from report.ledger import check_entry
from wick.ambiguity import AmbiguityCoefficients, WickFamily, extract_ambiguity, redefine_wick
from wick.leibniz import leibniz_check
from wick.powers import (
    equivariance_residual,
    hermiticity_residual,
    translation_residual,
    wick_derivative_axiom_check,
    wick_power,
)

NAME = "Wick powers"
MAX_K = 4


def run(config, output_dir):
    bench = workbench(config)
    lattice, W = bench.lattice, bench.W_P
    mu = lattice.volume_weight
    rng = np.random.default_rng(config.seed)
    f = bump_smearing(lattice)
    phi1, phi2 = random_field(lattice, rng), random_field(lattice, rng)
    zero = np.zeros(lattice.site_count)

    checks = []
    for k in range(1, MAX_K + 1):
        checks.append(check_entry(
            f"derivative axiom k={k}", "derivative of Wick powers",
            wick_derivative_axiom_check(k, f, W, phi1, phi2), config.tolerance("derivative_axiom"),
        ))
        checks.append(check_entry(
            f"hermiticity k={k}", "Wick powers are hermitian",
            hermiticity_residual(k, f * (1.0 + 0.5j), W), config.tolerance("exact"),
        ))
        at_zero = wick_power(k, f, W, phi=zero)
        if k % 2:
            expected = 0.0
        else:
            expected = pair_coefficient(k, k // 2) * np.sum(W.coincidence ** (k // 2) * f * mu)
        checks.append(check_entry(
            f"value at phi=0 k={k}", "Wick powers at the zero configuration",
            abs(at_zero - expected), config.tolerance("coincidence"),
        ))

    jet_f = np.stack([f] + [0.5 * bump_smearing(lattice, offset=1)] * lattice.dim, axis=1)
    checks.append(check_entry(
        "derivative axiom, jet smearing k=2", "derivative of Wick powers",
        wick_derivative_axiom_check(2, jet_f, W, phi1, phi2, jet_order=1), config.tolerance("derivative_axiom"),
    ))

    S = smooth_bump_matrix(lattice, bump_smearing(lattice, offset=1), amplitude=0.05)
    Q = affine_shift(bench.P, S)
    W_Q = smooth_part(Q, bench.H, order=config.parametrix.fit_order)
    for k in (2, 3):
        checks.append(check_entry(
            f"equivariance k={k}", "change of parametrix on Wick powers",
            equivariance_residual(k, f, bench.P, W, Q, W_Q), config.tolerance("homomorphism"),
        ))
    checks.append(check_entry(
        "translation covariance k=2", "covariance under isometries",
        translation_residual(2, f, W, [1] + [0] * (lattice.dim - 1), phi1), config.tolerance("homomorphism"),
    ))

    injected = AmbiguityCoefficients(
        lattice.site_count, {j: 0.1 * rng.standard_normal(lattice.site_count) for j in (2, 3, 4)}
    )
    base = WickFamily(W, lattice)
    recovered = extract_ambiguity(redefine_wick(base, injected), base, MAX_K)
    gap = max(float(np.max(np.abs(recovered(j) - injected(j)))) for j in (2, 3, 4))
    checks.append(check_entry(
        "ambiguity round trip", "uniqueness of Wick powers", gap, config.tolerance("ambiguity"),
    ))

    X = np.zeros((lattice.site_count, lattice.dim))
    X[:, 0] = bump_smearing(lattice, offset=-1)
    checks.append(check_entry(
        "Leibniz rule k=1", "Leibniz rule for Wick powers",
        leibniz_check(1, f, X, W, phi1), config.tolerance("leibniz_exact"),
    ))

    return {
        "name": NAME,
        "checks": checks,
        "records_found": len(checks),
    }
