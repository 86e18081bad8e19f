"""Bernoulli mixture densities, moments and likelihoods.

Everything is evaluated in log space. Missing cells contribute a factor of
one to a component density, which marginalizes them out.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .dataset import CohortDataset
from .errors import DimensionError, DomainError

EPS = 1e-10
PI_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Component Bernoulli parameters ``lam`` (K x M) and mixing weights ``pi``.

    ``lam`` is clamped into ``[EPS, 1 - EPS]`` on construction; ``pi`` must be
    a probability vector and is renormalized to remove rounding drift.
    """

    lam: np.ndarray
    pi: np.ndarray
    column_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        lam = np.array(self.lam, dtype=np.float64)
        if lam.ndim == 1:
            lam = lam[None, :]
        pi = np.array(self.pi, dtype=np.float64).reshape(-1)
        if lam.ndim != 2 or lam.shape[0] < 1 or lam.shape[1] < 1:
            raise DimensionError(f"lambda must be K x M with K, M >= 1, got {lam.shape}")
        if pi.shape != (lam.shape[0],):
            raise DimensionError(f"pi has {pi.size} entries for K={lam.shape[0]}")
        if not np.all(np.isfinite(lam)) or not np.all(np.isfinite(pi)):
            raise DomainError("parameters must be finite")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-9:
            raise DomainError(f"pi must lie on the simplex, got sum {pi.sum()!r}")
        lam = np.clip(lam, EPS, 1.0 - EPS)
        pi = pi / pi.sum()
        lam.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "pi", pi)
        if self.column_labels is not None:
            labels = tuple(self.column_labels)
            if len(labels) != lam.shape[1]:
                raise DimensionError(f"{len(labels)} labels for M={lam.shape[1]}")
            object.__setattr__(self, "column_labels", labels)

    @property
    def k(self) -> int:
        return self.lam.shape[0]

    @property
    def m(self) -> int:
        return self.lam.shape[1]

    def permuted(self, order: Sequence[int]) -> "MixtureParams":
        order = np.asarray(order)
        return MixtureParams(self.lam[order], self.pi[order], self.column_labels)

    def to_dict(self) -> dict:
        return {
            "K": self.k,
            "M": self.m,
            "lambda": self.lam.tolist(),
            "pi": self.pi.tolist(),
            "column_labels": None if self.column_labels is None else list(self.column_labels),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MixtureParams":
        lam = np.asarray(obj["lambda"], dtype=np.float64).reshape(obj["K"], obj["M"])
        return cls(lam, np.asarray(obj["pi"], dtype=np.float64), obj.get("column_labels"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MixtureParams":
        return cls.from_dict(json.loads(text))


def _as_row(row) -> np.ndarray:
    return np.array([np.nan if v is None else v for v in row], dtype=np.float64)


def component_log_density(row, lambda_j) -> float:
    """log Pr(row | lambda_j) summed over the observed entries of ``row``."""
    x = _as_row(row)
    lam = np.clip(np.asarray(lambda_j, dtype=np.float64), EPS, 1.0 - EPS)
    if x.shape != lam.shape:
        raise DimensionError(f"row has {x.size} entries, lambda has {lam.size}")
    obs = ~np.isnan(x)
    xo = x[obs]
    lo = lam[obs]
    return float(np.sum(xo * np.log(lo) + (1.0 - xo) * np.log1p(-lo)))


def _check_dims(ds: CohortDataset, params: MixtureParams) -> None:
    if ds.m != params.m:
        raise DimensionError(f"dataset has M={ds.m} columns, params have M={params.m}")


def _indicator_arrays(ds: CohortDataset) -> tuple[np.ndarray, np.ndarray]:
    """0/1 matrices marking observed positive and observed negative cells."""
    ones = ds.filled()
    return ones, ds.observed.astype(np.float64) - ones


def _log_density_arrays(ones: np.ndarray, zeros: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return ones @ np.log(lam).T + zeros @ np.log1p(-lam).T


def log_density_matrix(ds: CohortDataset, params: MixtureParams) -> np.ndarray:
    """N x K matrix of component log densities."""
    _check_dims(ds, params)
    return _log_density_arrays(*_indicator_arrays(ds), params.lam)


def _log_pi(pi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(pi)


def log_joint(ds: CohortDataset, params: MixtureParams) -> np.ndarray:
    """N x K matrix of ``log pi_j + log Pr(row_n | lambda_j)``."""
    return _log_pi(params.pi)[None, :] + log_density_matrix(ds, params)


def mixture_log_likelihood(ds: CohortDataset, params: MixtureParams) -> float:
    return float(np.sum(logsumexp(log_joint(ds, params), axis=1)))


def mixture_mean(params: MixtureParams) -> np.ndarray:
    return params.pi @ params.lam


def mixture_cov(params: MixtureParams) -> np.ndarray:
    """Covariance of the mixture: second moment minus outer product of the mean.

    Each component contributes its diagonal Bernoulli covariance plus the
    outer product of its mean vector, weighted by its mixing weight.
    """
    lam, pi = params.lam, params.pi
    mean = pi @ lam
    second = (lam.T * pi) @ lam
    second[np.diag_indices_from(second)] += pi @ (lam * (1.0 - lam))
    cov = second - np.outer(mean, mean)
    return 0.5 * (cov + cov.T)


def expected_complete_log_likelihood(ds: CohortDataset, params: MixtureParams,
                                     resp) -> float:
    """Expected complete-data log-likelihood under the given responsibilities.

    Uses ``(1 - x) log(1 - lambda)`` for negative answers. Cells with zero
    responsibility contribute nothing, even where ``pi_j`` is zero.
    """
    r = np.asarray(getattr(resp, "values", resp), dtype=np.float64)
    if r.shape != (ds.n, params.k):
        raise DimensionError(f"responsibilities have shape {r.shape}, expected {(ds.n, params.k)}")
    joint = log_joint(ds, params)
    with np.errstate(invalid="ignore"):
        contrib = np.where(r > 0, r * joint, 0.0)
    return float(contrib.sum())
