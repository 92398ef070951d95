import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

MAX_PAIRED_VECTORS = 8


def all_pairings(items):
    """Yields every perfect matching of `items`, deterministic order."""
    items = list(items)
    if not items:
        yield []
        return
    first = items.pop(0)
    for i, item in enumerate(items):
        for rest in all_pairings(items[:i] + items[i + 1:]):
            yield [(first, item)] + rest


def double_factorial(n):
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


@dataclass(frozen=True)
class PairingEnumeration:
    """Perfect matchings of 2n slots with the weight of each under a covariance Gram matrix."""

    gram: np.ndarray
    pairings: List[List[Tuple[int, int]]] = field(default_factory=list)
    weights: np.ndarray = None

    @classmethod
    def from_gram(cls, gram):
        gram = np.asarray(gram)
        pairings = list(all_pairings(range(gram.shape[0])))
        weights = np.array([np.prod([gram[i, j] for i, j in p]) for p in pairings])
        return cls(gram, pairings, weights)

    @property
    def total(self):
        return self.weights.sum()


def gram_matrix(covariance, vectors, mu):
    """<f_i, C f_j> in the density convention sum f_i(x) C(x, y) f_j(y) mu(x) mu(y)."""
    F = np.asarray(vectors) * np.asarray(mu)[None, :]
    return F @ np.asarray(covariance) @ F.T


def isserlis_moment(covariance, vectors, mu):
    """E[prod_i Phi(f_i)] of the centered Gaussian with covariance C, by explicit matching enumeration."""
    vectors = np.atleast_2d(np.asarray(vectors))
    count = vectors.shape[0]
    if count > MAX_PAIRED_VECTORS:
        raise ValueError(f"pairing enumeration is capped at {MAX_PAIRED_VECTORS} vectors, got {count}")
    if count % 2:
        logger.info(f"odd moment of {count} fields vanishes")
        return 0.0
    if count == 0:
        return 1.0
    enumeration = PairingEnumeration.from_gram(gram_matrix(covariance, vectors, mu))
    if len(enumeration.pairings) != double_factorial(count - 1):
        raise RuntimeError("pairing enumeration is incomplete")
    return float(np.real_if_close(enumeration.total))
