import logging

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from algebra.contraction import ContractionOperator, gamma_exp
from common.errors import SingularOperatorError
from functionals.polynomial import PolynomialFunctional, evaluate, evaluate_batch

logger = logging.getLogger(__name__)

MIN_SAMPLES = 100


class GaussianSampler:
    """
    Centered Gaussian fields with covariance C (the exact Green kernel), drawn
    through the lower Cholesky factor. Independent streams come from one
    SeedSequence so batches are reproducible for a fixed seed.
    """

    def __init__(self, covariance, rng_seed=0):
        covariance = np.asarray(covariance, dtype=float)
        if covariance.ndim != 2 or covariance.shape[0] != covariance.shape[1]:
            raise ValueError(f"covariance must be square, got {covariance.shape}")
        if not np.allclose(covariance, covariance.T, rtol=0, atol=1e-12 * max(np.abs(covariance).max(), 1.0)):
            raise ValueError("covariance must be symmetric")
        try:
            self.factor = cholesky(covariance, lower=True)
        except LinAlgError:
            smallest = float(np.linalg.eigvalsh(covariance).min())
            raise SingularOperatorError(
                f"covariance is not positive-definite (smallest eigenvalue {smallest:.3e})", smallest
            )
        self.covariance = covariance
        self.rng_seed = rng_seed

    @property
    def site_count(self):
        return self.covariance.shape[0]

    def streams(self, count):
        return [np.random.default_rng(s) for s in np.random.SeedSequence(self.rng_seed).spawn(count)]

    def sample(self, n_samples, rng=None):
        rng = rng if rng is not None else np.random.default_rng(self.rng_seed)
        z = rng.standard_normal((n_samples, self.site_count))
        return z @ self.factor.T


def mc_expectation(sampler: GaussianSampler, F, n_samples, n_streams=4, batch_size=5000):
    """
    Monte Carlo mean of F with its standard error; F is a PolynomialFunctional
    or a callable on a (B, N) batch.
    """
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"Monte Carlo estimates need at least {MIN_SAMPLES} samples, got {n_samples}")
    per_stream = [n_samples // n_streams + (1 if i < n_samples % n_streams else 0) for i in range(n_streams)]

    values = []
    for rng, count in zip(sampler.streams(n_streams), per_stream):
        remaining = count
        while remaining > 0:
            size = min(batch_size, remaining)
            phis = sampler.sample(size, rng)
            if isinstance(F, PolynomialFunctional):
                values.append(np.asarray(evaluate_batch(F, phis)))
            else:
                values.append(np.asarray(F(phis)))
            remaining -= size

    values = np.concatenate(values)
    mean = values.mean()
    stderr = values.std(ddof=1) / np.sqrt(values.size)
    return mean, stderr


def gaussian_expectation(F: PolynomialFunctional, covariance):
    """Exact expectation exp[Upsilon_C] F at phi = 0 for the centered Gaussian with covariance C."""
    contraction = ContractionOperator(np.asarray(covariance), label="C", smooth=True)
    return evaluate(gamma_exp(contraction, F), np.zeros(F.lattice.site_count))


def connected_first_order(sampler: GaussianSampler, X: PolynomialFunctional, V: PolynomialFunctional, n_samples,
                          n_streams=4):
    """
    Monte Carlo estimate of <X (V - <V>)>, which is the phi = 0 value of the
    order-lambda Moller coefficient of X when P = G. <V> is exact.
    """
    v_mean = gaussian_expectation(V, sampler.covariance)

    def integrand(phis):
        return np.asarray(evaluate_batch(X, phis)) * (np.asarray(evaluate_batch(V, phis)) - v_mean)

    mean, stderr = mc_expectation(sampler, integrand, n_samples, n_streams=n_streams)
    logger.info(f"connected first order: {mean:.4e} +/- {stderr:.2e} from {n_samples} samples")
    return mean, stderr
