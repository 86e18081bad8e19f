"""Prevalence estimates with Student-t confidence intervals."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import betainc

from .dataset import CohortDataset
from .errors import DimensionError, DomainError, InsufficientDataError


@dataclass(frozen=True)
class PrevalenceEstimate:
    column_label: str
    mean: float
    ci_low: float
    ci_high: float
    n_used: int
    df: float
    confidence: float

    def to_dict(self) -> dict:
        return asdict(self)


def _t_upper_tail(t: float, df: float) -> float:
    """P(T > t) for t >= 0, via the regularized incomplete beta function."""
    return 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))


def _t_log_density(t: float, df: float) -> float:
    return (math.lgamma(0.5 * (df + 1)) - math.lgamma(0.5 * df)
            - 0.5 * math.log(df * math.pi) - 0.5 * (df + 1) * math.log1p(t * t / df))


def _t_central(t: float, df: float) -> float:
    """P(|T| < t) for t >= 0; accurate where the upper-tail form rounds."""
    return betainc(0.5, 0.5 * df, t * t / (df + t * t))


def t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise DomainError(f"df must be positive, got {df}")
    central = _t_central(abs(t), df)
    if central < 0.5:
        half = 0.5 * central
        return 0.5 + half if t >= 0 else 0.5 - half
    tail = _t_upper_tail(abs(t), df)
    return 1.0 - tail if t >= 0 else tail


def t_quantile(p: float, df: float) -> float:
    """Quantile of Student's t distribution with ``df`` degrees of freedom.

    Root-finds on the incomplete-beta form of the CDF with a Newton iteration
    safeguarded by bisection. The upper-tail form is used for p far from 1/2
    and the central form ``P(|T| < q)`` near 1/2, so neither loses digits to
    cancellation.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if not df > 0:
        raise DomainError(f"df must be positive, got {df}")
    if p == 0.5:
        return 0.0
    sign = 1.0 if p > 0.5 else -1.0
    tail = 1.0 - p if p > 0.5 else p

    if tail > 0.25:
        target = abs(2.0 * p - 1.0)

        def increasing(q: float) -> float:
            return _t_central(q, df)

        slope = 2.0
    else:
        target = -tail

        def increasing(q: float) -> float:
            return -_t_upper_tail(q, df)

        slope = 1.0

    lo, hi = 0.0, 1.0
    while increasing(hi) < target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise DomainError(f"quantile overflow for p={p}, df={df}")

    q = 0.5 * (lo + hi)
    for _ in range(200):
        f = increasing(q) - target
        if f == 0.0:
            break
        if f < 0:
            lo = q
        else:
            hi = q
        deriv = slope * math.exp(_t_log_density(q, df))
        step = q - f / deriv if deriv > 0 else lo - 1.0
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if abs(step - q) <= 1e-15 * max(1.0, abs(q)):
            q = step
            break
        q = step
    return sign * q


def wald_t_interval(mean: float, n: float, df: float, confidence: float) -> tuple[float, float]:
    """Clamped Wald interval ``mean -/+ t * sqrt(mean (1 - mean) / n)``."""
    half = t_quantile(0.5 * (1.0 + confidence), df) * math.sqrt(mean * (1.0 - mean) / n)
    return max(0.0, mean - half), min(1.0, mean + half)


def prevalence_with_ci(ds: CohortDataset, column: int, confidence: float = 0.95,
                       df: float | None = None, n: float | None = None) -> PrevalenceEstimate:
    """Proportion of positive answers in one column with a t-based interval.

    Only observed cells count. ``df`` defaults to ``n_used - 1``; ``df`` and
    the standard-error sample size ``n`` can be pinned for replication runs.
    """
    if not 0 <= column < ds.m:
        raise DimensionError(f"column {column} out of range for M={ds.m}")
    if not 0.0 < confidence < 1.0:
        raise DomainError(f"confidence must lie in (0, 1), got {confidence}")
    col = ds.values[:, column]
    obs = col[~np.isnan(col)]
    n_used = int(obs.size)
    if n_used < 2:
        raise InsufficientDataError(
            f"column {ds.column_labels[column]!r} has {n_used} observed cells, need 2")
    mean = float(obs.sum()) / n_used
    dof = float(n_used - 1) if df is None else float(df)
    n_se = float(n_used) if n is None else float(n)
    if n_se <= 0:
        raise DomainError(f"n override must be positive, got {n}")
    low, high = wald_t_interval(mean, n_se, dof, confidence)
    return PrevalenceEstimate(ds.column_labels[column], mean, low, high, n_used, dof, confidence)


def prevalence_table(ds: CohortDataset, confidence: float = 0.95, df: float | None = None,
                     n: float | None = None) -> list[PrevalenceEstimate]:
    return [prevalence_with_ci(ds, i, confidence, df, n) for i in range(ds.m)]


def format_table(rows: list[PrevalenceEstimate]) -> str:
    pct = int(round(rows[0].confidence * 100)) if rows else 95
    head = f"{'Column':<12} {'Est. mean':>10} {f'LHS CI {pct}%':>12} {f'RHS CI {pct}%':>12} {'n':>6} {'df':>8}"
    lines = [head]
    for r in rows:
        lines.append(f"{r.column_label:<12} {r.mean:>10.2%} {r.ci_low:>12.2%} {r.ci_high:>12.2%} "
                     f"{r.n_used:>6d} {r.df:>8g}")
    return "\n".join(lines)
