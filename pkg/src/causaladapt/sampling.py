"""Seeded random primitives: gamma, Dirichlet, Wishart and Gaussian draws.

Every sampler consumes an :class:`RngStream`, a thin wrapper around a
counter-based numpy generator keyed by ``(seed, stream_id)``. Two streams
with the same key replay the same sequence bit for bit; streams with
different ids are statistically independent, so parallel runs can each own
one without coordination.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular


def _hash64(*parts) -> int:
    """Stable 64-bit hash of a tuple of ints/strings (order sensitive)."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


@dataclass
class RngStream:
    """One independent random stream, reproducible from (seed, stream_id)."""

    seed: int
    stream_id: int = 0
    gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        key = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.Philox(key))

    def child(self, *parts) -> "RngStream":
        """Derive a new stream keyed by (seed, hash(stream_id, parts)).

        Deterministic in its arguments and independent of how far this
        stream has advanced, which keeps parallel schedules reproducible.
        """
        return RngStream(self.seed, _hash64(self.stream_id, *parts))


@dataclass
class WishartParams:
    """Degrees of freedom and scale matrix of a Wishart law."""

    dof: int
    scale: np.ndarray


def gamma_sample(shape, rng: RngStream, size=None):
    """Draw from Gamma(shape, 1).

    Valid for any shape > 0, including the small shapes used by sparse
    Dirichlet priors.
    """
    shape = np.asarray(shape, dtype=float)
    if np.any(shape <= 0):
        raise ValueError("gamma shape must be positive")
    return rng.gen.gamma(shape, size=size)


def dirichlet_sample(alpha, rng: RngStream) -> np.ndarray:
    """Draw a probability vector from Dirichlet(alpha).

    Built as independent Gamma(alpha_i, 1) draws normalized by their sum.
    Entries are nonnegative and sum to one up to roundoff.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 0:
        raise ValueError("alpha must be nonempty")
    if np.any(alpha <= 0):
        raise ValueError("all Dirichlet parameters must be positive")
    g = rng.gen.gamma(alpha)
    total = g.sum()
    if total == 0.0:
        # all components underflowed (only conceivable for tiny shapes);
        # fall back to the uniform vector rather than dividing by zero
        return np.full(alpha.shape, 1.0 / alpha.size)
    return g / total


def wishart_sample(params: WishartParams, rng: RngStream) -> np.ndarray:
    """Draw a symmetric positive-definite matrix from W(dof, scale).

    Uses the Bartlett construction: W = (L A)(L A)^T with L the Cholesky
    factor of the scale and A lower triangular with chi-distributed
    diagonal, which costs O(K^3) per draw for any dof >= K.
    """
    scale = np.asarray(params.scale, dtype=float)
    k = scale.shape[0]
    if scale.shape != (k, k):
        raise ValueError("scale must be square")
    if params.dof < k:
        raise ValueError("dof must be at least the dimension")
    chol = np.linalg.cholesky(scale)
    bart = np.zeros((k, k))
    rows, cols = np.tril_indices(k, -1)
    bart[rows, cols] = rng.gen.standard_normal(rows.size)
    bart[np.diag_indices(k)] = np.sqrt(rng.gen.chisquare(params.dof - np.arange(k)))
    factor = chol @ bart
    w = factor @ factor.T
    return (w + w.T) / 2


def mvn_sample(mean, precision_cholesky, rng: RngStream, size=None) -> np.ndarray:
    """Draw x = mean + L^{-T} z with z standard normal.

    ``precision_cholesky`` is the lower-triangular factor L with LL^T the
    precision matrix, so the draws have covariance (LL^T)^{-1}.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    chol = np.atleast_2d(np.asarray(precision_cholesky, dtype=float))
    k = mean.shape[0]
    if chol.shape != (k, k):
        raise ValueError("precision Cholesky factor shape does not match mean")
    if np.any(np.diag(chol) <= 0):
        raise ValueError("precision Cholesky factor needs a strictly positive diagonal")
    if size is None:
        z = rng.gen.standard_normal(k)
        return mean + solve_triangular(chol, z, lower=True, trans="T")
    z = rng.gen.standard_normal((size, k))
    return mean + solve_triangular(chol, z.T, lower=True, trans="T").T
