"""Expectation-maximization for Bernoulli mixtures with missing entries."""
from __future__ import annotations

import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import EPS, MixtureParams, _check_dims, _indicator_arrays, _log_density_arrays, _log_pi
from .dataset import CohortDataset
from .errors import DimensionError, DomainError, FitError

THREADS_ENV = "BERNMIX_THREADS"
DEGENERATE_WEIGHT = 1e-8
INIT_LOW, INIT_HIGH = 0.25, 0.75
INIT_STRATEGIES = ("uniform-central",)


class DegenerateColumnWarning(RuntimeWarning):
    """A cluster had no observed weight in some column; its lambda was set to 0.5."""


@dataclass(frozen=True, eq=False)
class Responsibilities:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DimensionError(f"responsibilities must be N x K, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_j(self) -> np.ndarray:
        """Effective number of rows per cluster."""
        return self.values.sum(axis=0)

    def weighted_means(self, ds: CohortDataset) -> np.ndarray:
        """Per-cluster responsibility-weighted means over observed cells."""
        obs = ds.observed.astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return (self.values.T @ ds.filled()) / (self.values.T @ obs)


@dataclass(frozen=True)
class FitConfig:
    k: int
    seed: int = 0
    restarts: int = 20
    tol: float = 1e-8
    max_iter: int = 500
    map_smoothing: tuple[float, float] | None = None
    dirichlet_alpha: float | None = None
    init: str = "uniform-central"

    def __post_init__(self):
        if self.k < 1:
            raise DomainError(f"K must be >= 1, got {self.k}")
        if self.restarts < 1:
            raise DomainError(f"restarts must be >= 1, got {self.restarts}")
        if not self.tol > 0:
            raise DomainError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be >= 1, got {self.max_iter}")
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a non-negative 64-bit integer, got {self.seed}")
        if self.map_smoothing is not None:
            a, b = self.map_smoothing
            if not (a > 0 and b > 0):
                raise DomainError(f"Beta smoothing needs a, b > 0, got {self.map_smoothing}")
            object.__setattr__(self, "map_smoothing", (float(a), float(b)))
        if self.dirichlet_alpha is not None and not self.dirichlet_alpha > 0:
            raise DomainError(f"dirichlet_alpha must be positive, got {self.dirichlet_alpha}")
        if self.init not in INIT_STRATEGIES:
            raise DomainError(f"unknown init strategy {self.init!r}")

    @property
    def is_map(self) -> bool:
        return self.map_smoothing is not None or self.dirichlet_alpha is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.map_smoothing is not None:
            d["map_smoothing"] = list(self.map_smoothing)
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "FitConfig":
        obj = dict(obj)
        if obj.get("map_smoothing") is not None:
            obj["map_smoothing"] = tuple(obj["map_smoothing"])
        return cls(**obj)


@dataclass(frozen=True, eq=False)
class FitResult:
    params: MixtureParams
    resp: Responsibilities
    hard_assignment: np.ndarray
    assignment_prob: np.ndarray
    ll_trace: tuple[float, ...]
    log_likelihood: float
    converged: bool
    iterations: int
    best_restart: int
    seed: int
    config: FitConfig
    data: CohortDataset
    degenerate: bool = False
    restart_log_likelihoods: tuple[float, ...] = field(default=())

    @property
    def patient_ids(self) -> np.ndarray:
        return self.data.patient_ids

    def to_dict(self) -> dict:
        probs = self.resp.values
        return {
            "config": self.config.to_dict(),
            "seed": self.seed,
            "params": self.params.to_dict(),
            "log_likelihood": self.log_likelihood,
            "ll_trace": list(self.ll_trace),
            "converged": self.converged,
            "iterations": self.iterations,
            "best_restart": self.best_restart,
            "degenerate": self.degenerate,
            "restart_log_likelihoods": list(self.restart_log_likelihoods),
            "column_labels": list(self.data.column_labels),
            "patients": [
                {
                    "id": int(self.data.patient_ids[n]),
                    "cluster": int(self.hard_assignment[n]),
                    "probability": float(self.assignment_prob[n]),
                    "probabilities": probs[n].tolist(),
                    "row": self.data.row_pattern(n),
                }
                for n in range(self.data.n)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "FitResult":
        patients = obj["patients"]
        data = CohortDataset.from_rows([p["row"] for p in patients], obj["column_labels"],
                                       [p["id"] for p in patients])
        resp = Responsibilities(np.array([p["probabilities"] for p in patients], dtype=np.float64))
        return cls(
            params=MixtureParams.from_dict(obj["params"]),
            resp=resp,
            hard_assignment=np.array([p["cluster"] for p in patients], dtype=np.int64),
            assignment_prob=np.array([p["probability"] for p in patients], dtype=np.float64),
            ll_trace=tuple(obj["ll_trace"]),
            log_likelihood=obj["log_likelihood"],
            converged=obj["converged"],
            iterations=obj["iterations"],
            best_restart=obj["best_restart"],
            seed=obj["seed"],
            config=FitConfig.from_dict(obj["config"]),
            data=data,
            degenerate=obj.get("degenerate", False),
            restart_log_likelihoods=tuple(obj.get("restart_log_likelihoods", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit sub-seed for ``(seed, *keys)``."""
    state = np.random.SeedSequence([seed, *keys]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, restart]))


def _posterior(joint: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise log-sum-exp of ``joint`` and the normalized responsibilities."""
    top = joint.max(axis=1, keepdims=True)
    e = np.exp(joint - top)
    s = e.sum(axis=1, keepdims=True)
    return (top + np.log(s))[:, 0], e / s


def _joint(ones, zeros, lam, pi):
    return _log_pi(pi)[None, :] + _log_density_arrays(ones, zeros, lam)


def e_step(ds: CohortDataset, params: MixtureParams) -> Responsibilities:
    """Posterior cluster probabilities for every row."""
    _check_dims(ds, params)
    joint = _joint(*_indicator_arrays(ds), params.lam, params.pi)
    return Responsibilities(_posterior(joint)[1])


def _m_step_arrays(ones, zeros, r, config: FitConfig, weights=None):
    # weights: multiplicity of each row when rows are unique answer patterns
    if weights is not None:
        r = r * weights[:, None]
    n_j = r.sum(axis=0)
    num = r.T @ ones
    den = num + r.T @ zeros
    if config.map_smoothing is not None:
        a, b = config.map_smoothing
        num = np.maximum(num + (a - 1.0), 0.0)
        den = den + (a + b - 2.0)
        den = np.where(den > 0, den, 0.0)
        num = np.minimum(num, den)
    empty = den <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(empty, 0.5, num / np.where(empty, 1.0, den))
    lam = np.clip(lam, EPS, 1.0 - EPS)

    alpha = config.dirichlet_alpha
    if config.is_map and alpha is not None:
        pi = np.maximum(n_j + (alpha - 1.0), 0.0)
        if pi.sum() <= 0:
            pi = n_j.copy()
    else:
        pi = n_j.copy()
    pi = pi / pi.sum() if pi.sum() > 0 else np.full(r.shape[1], 1.0 / r.shape[1])
    return lam, pi, bool(empty.any())


def m_step(ds: CohortDataset, resp: Responsibilities, config: FitConfig) -> MixtureParams:
    """Closed-form parameter update from responsibilities.

    Each lambda is the responsibility-weighted mean of the observed cells in its
    column (with Beta pseudo-counts when ``config.map_smoothing`` is set). A
    column with no observed weight in a cluster gets 0.5 and a
    ``DegenerateColumnWarning``.
    """
    r = resp.values
    if r.shape[0] != ds.n:
        raise DimensionError(f"responsibilities have {r.shape[0]} rows, dataset has {ds.n}")
    lam, pi, degenerate = _m_step_arrays(*_indicator_arrays(ds), r, config)
    if degenerate:
        warnings.warn("cluster with no observed weight in a column; lambda set to 0.5",
                      DegenerateColumnWarning, stacklevel=2)
    return MixtureParams(lam, pi, ds.column_labels)


def _log_prior(lam, pi, config: FitConfig) -> float:
    total = 0.0
    if config.map_smoothing is not None:
        a, b = config.map_smoothing
        total += float(np.sum((a - 1.0) * np.log(lam) + (b - 1.0) * np.log1p(-lam)))
    if config.dirichlet_alpha is not None and config.dirichlet_alpha != 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = (config.dirichlet_alpha - 1.0) * np.log(pi)
        total += float(np.sum(np.where(pi > 0, terms, 0.0)))
    return total


@dataclass
class _RunOutcome:
    lam: np.ndarray
    pi: np.ndarray
    resp: np.ndarray
    trace: list[float]
    log_likelihood: float
    converged: bool
    iterations: int
    degenerate: bool


def _run_restart(ones, zeros, weights, config: FitConfig, restart: int) -> _RunOutcome:
    k, m = config.k, ones.shape[1]
    rng = restart_rng(config.seed, restart)
    lam = rng.uniform(INIT_LOW, INIT_HIGH, size=(k, m))
    pi = np.full(k, 1.0 / k)

    def evaluate(lam, pi):
        lse, r = _posterior(_joint(ones, zeros, lam, pi))
        ll = float(lse @ weights)
        return r, ll, ll + _log_prior(lam, pi, config)

    r, ll, obj = evaluate(lam, pi)
    trace = [obj]
    converged = False
    degenerate = False
    reinit_left = 1
    it = 0
    for it in range(1, config.max_iter + 1):
        lam, pi, empty = _m_step_arrays(ones, zeros, r, config, weights)
        degenerate |= empty
        step = evaluate(lam, pi)

        collapsed = np.flatnonzero(weights @ r < DEGENERATE_WEIGHT)
        if reinit_left and collapsed.size:
            reinit_left = 0
            cand = lam.copy()
            cand[collapsed] = rng.uniform(INIT_LOW, INIT_HIGH, size=(collapsed.size, m))
            trial = evaluate(cand, pi)
            # keep the objective monotone: only take the fresh component if it does not hurt
            if trial[2] >= step[2]:
                lam, step = cand, trial

        r_next, ll, new_obj = step
        if not np.isfinite(new_obj):
            raise FitError(f"non-finite objective at iteration {it} of restart {restart}: "
                           f"pi={pi.tolist()}, lambda range=({lam.min()}, {lam.max()})")
        trace.append(new_obj)
        delta = abs(new_obj - obj) / (1.0 + abs(new_obj))
        obj = new_obj
        r = r_next
        if delta < config.tol:
            converged = True
            break

    return _RunOutcome(lam, pi, r, trace, ll, converged, it, degenerate)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _best_index(outcomes: list[_RunOutcome]) -> int:
    # final objective; ties go to the lowest restart index
    best = 0
    for i, o in enumerate(outcomes):
        if o.trace[-1] > outcomes[best].trace[-1]:
            best = i
    return best


def fit(ds: CohortDataset, config: FitConfig, workers: int | None = None) -> FitResult:
    """Fit a K-component mixture by EM, keeping the best of ``config.restarts`` runs.

    Each restart draws its initial lambda from a generator seeded by
    ``(config.seed, restart)``, so the result does not depend on ``workers``.
    """
    # EM runs on distinct answer patterns weighted by their counts
    codes = np.where(ds.observed, ds.values, 2.0)
    patterns, inverse, counts = np.unique(codes, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    ones = (patterns == 1.0).astype(np.float64)
    zeros = (patterns == 0.0).astype(np.float64)
    weights = counts.astype(np.float64)
    workers = default_workers() if workers is None else max(1, int(workers))
    indices = range(config.restarts)
    if workers > 1 and config.restarts > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda i: _run_restart(ones, zeros, weights, config, i), indices))
    else:
        outcomes = [_run_restart(ones, zeros, weights, config, i) for i in indices]

    best = _best_index(outcomes)
    o = outcomes[best]
    params = MixtureParams(o.lam, o.pi, ds.column_labels)
    resp = o.resp[inverse]
    hard = np.argmax(resp, axis=1)
    return FitResult(
        params=params,
        resp=Responsibilities(resp),
        hard_assignment=hard,
        assignment_prob=resp[np.arange(ds.n), hard],
        ll_trace=tuple(o.trace),
        log_likelihood=o.log_likelihood,
        converged=o.converged,
        iterations=o.iterations,
        best_restart=best,
        seed=config.seed,
        config=config,
        data=ds,
        degenerate=o.degenerate,
        restart_log_likelihoods=tuple(u.trace[-1] for u in outcomes),
    )


def predict(params: MixtureParams, row) -> tuple[np.ndarray, int]:
    """Cluster probabilities for one (possibly incomplete) answer row."""
    x = np.array([np.nan if v is None else v for v in row], dtype=np.float64)
    if x.shape != (params.m,):
        raise DimensionError(f"row has {x.size} entries, model has M={params.m}")
    ones = np.where(x == 1.0, 1.0, 0.0)[None, :]
    zeros = np.where(x == 0.0, 1.0, 0.0)[None, :]
    joint = _joint(ones, zeros, params.lam, params.pi)
    probs = _posterior(joint)[1][0]
    return probs, int(np.argmax(probs))
