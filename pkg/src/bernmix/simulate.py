"""Synthetic cohorts drawn from the hierarchical Bernoulli mixture model.

Cluster profiles are Beta(1/2, 1/2), cluster weights Dirichlet(alpha),
assignments categorical and answers Bernoulli; cells are then masked
completely at random with per-column rates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .dataset import CohortDataset
from .errors import DomainError

PROFILE_BETA = (0.5, 0.5)
# realized fraction of incomplete rows in the reference cohort: 537 / 1184
REFERENCE_INCOMPLETE_FRACTION = 537 / 1184


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    data: CohortDataset
    true_lambda: np.ndarray
    true_r: np.ndarray
    true_z: np.ndarray
    seed: int
    alpha: np.ndarray
    missing_rates: np.ndarray

    def truth_dict(self) -> dict:
        return {
            "seed": self.seed,
            "K": int(self.true_lambda.shape[0]),
            "M": int(self.true_lambda.shape[1]),
            "N": self.data.n,
            "alpha": self.alpha.tolist(),
            "missing_rates": self.missing_rates.tolist(),
            "true_lambda": self.true_lambda.tolist(),
            "true_r": self.true_r.tolist(),
            "true_z": self.true_z.tolist(),
        }

    def truth_json(self) -> str:
        return json.dumps(self.truth_dict(), indent=1)


def sample_dirichlet(rng: np.random.Generator, alpha: np.ndarray, size: int | None = None) -> np.ndarray:
    """Dirichlet draws as normalized Gamma variates."""
    alpha = np.asarray(alpha, dtype=np.float64)
    shape = alpha.shape if size is None else (size, alpha.size)
    g = rng.gamma(alpha, 1.0, size=shape)
    total = g.sum(axis=-1, keepdims=True)
    # every gamma underflowed (tiny alpha): put the mass on the largest shape
    bad = (total <= 0)[..., 0]
    if np.any(bad):
        g[bad] = 0.0
        g[bad, int(np.argmax(alpha))] = 1.0
        total = g.sum(axis=-1, keepdims=True)
    return g / total


def sample_beta(rng: np.random.Generator, a: float, b: float, size) -> np.ndarray:
    """Beta(a, b) draws as the first coordinate of a two-dimensional Dirichlet."""
    size = (size,) if np.isscalar(size) else tuple(size)
    flat = sample_dirichlet(rng, np.array([a, b]), size=int(np.prod(size)))[:, 0]
    return flat.reshape(size)


def increasing_missing_profile(m: int, incomplete_fraction: float = REFERENCE_INCOMPLETE_FRACTION) -> np.ndarray:
    """Per-column missing rates growing linearly with the column index.

    Rates are proportional to ``1, 2, ..., m`` and scaled so that the expected
    fraction of rows with at least one missing cell is ``incomplete_fraction``.
    """
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if not 0.0 <= incomplete_fraction < 1.0:
        raise DomainError(f"incomplete_fraction must lie in [0, 1), got {incomplete_fraction}")
    if incomplete_fraction == 0.0:
        return np.zeros(m)
    shape = np.arange(1, m + 1) / m

    def gap(scale):
        return 1.0 - np.prod(1.0 - scale * shape) - incomplete_fraction

    scale = brentq(gap, 0.0, 1.0 - 1e-12)
    return scale * shape


def sample_dataset(k: int, m: int, n: int, alpha=None, seed: int = 0, missing_rates=None,
                   lambda_override=None, r_override=None,
                   column_labels=None) -> SyntheticSample:
    """Draw a synthetic cohort and keep the realized ground truth.

    ``alpha`` defaults to all ones; ``missing_rates`` defaults to
    :func:`increasing_missing_profile`. ``lambda_override`` (K x M) and
    ``r_override`` (K) pin the cluster profiles and weights instead of
    drawing them. Each stage draws from its own child generator, so
    overriding one stage leaves the others unchanged.
    """
    if k < 1 or m < 1 or n < 1:
        raise DomainError(f"K, M, N must be >= 1, got {k}, {m}, {n}")
    alpha = np.ones(k) if alpha is None else np.broadcast_to(np.asarray(alpha, dtype=np.float64), (k,)).copy()
    if not np.all(alpha > 0) or not np.all(np.isfinite(alpha)):
        raise DomainError(f"alpha entries must be positive, got {alpha.tolist()}")
    rates = increasing_missing_profile(m) if missing_rates is None else \
        np.broadcast_to(np.asarray(missing_rates, dtype=np.float64), (m,)).copy()
    if np.any(rates < 0) or np.any(rates >= 1) or not np.all(np.isfinite(rates)):
        raise DomainError(f"missing rates must lie in [0, 1), got {rates.tolist()}")

    rng_p, rng_r, rng_z, rng_x, rng_mask = (np.random.default_rng(s)
                                           for s in np.random.SeedSequence(seed).spawn(5))
    if lambda_override is None:
        true_lambda = sample_beta(rng_p, *PROFILE_BETA, size=(k, m))
    else:
        true_lambda = np.array(lambda_override, dtype=np.float64)
        if true_lambda.shape != (k, m) or np.any(true_lambda < 0) or np.any(true_lambda > 1):
            raise DomainError(f"lambda_override must be a {k}x{m} matrix of probabilities")
    if r_override is None:
        true_r = sample_dirichlet(rng_r, alpha)
    else:
        true_r = np.array(r_override, dtype=np.float64)
        if true_r.shape != (k,) or np.any(true_r < 0) or abs(true_r.sum() - 1.0) > 1e-9:
            raise DomainError("r_override must be a probability vector of length K")

    cdf = np.cumsum(true_r)
    cdf[-1] = 1.0
    true_z = np.searchsorted(cdf, rng_z.random(n), side="right")
    true_z = np.minimum(true_z, k - 1)
    x = (rng_x.random((n, m)) < true_lambda[true_z]).astype(np.float64)
    x[rng_mask.random((n, m)) < rates] = np.nan

    if column_labels is None:
        column_labels = tuple(f"Col {i + 1}" for i in range(m))
    data = CohortDataset(x, tuple(column_labels), np.arange(n))
    return SyntheticSample(data, true_lambda, true_r, true_z.astype(np.int64), seed, alpha, rates)
