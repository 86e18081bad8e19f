"""Model selection by dominant-cluster counting, and comparison of two fits."""
from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import MixtureParams
from .dataset import CohortDataset
from .em import FitConfig, FitResult, default_workers, derive_seed, fit
from .errors import BernmixError, DimensionError, DomainError

DEFAULT_DOMINANCE = 0.05
# distinguishes k_sweep sub-seeds from restart sub-seeds
SWEEP_STREAM = 0x5EE9


def dominant_cluster_count(params: MixtureParams | np.ndarray, threshold: float = DEFAULT_DOMINANCE) -> int:
    """Number of components whose mixing weight is at least ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise DomainError(f"threshold must lie in (0, 1), got {threshold}")
    pi = params.pi if isinstance(params, MixtureParams) else np.asarray(params, dtype=np.float64)
    return int(np.count_nonzero(pi >= threshold))


@dataclass(frozen=True, eq=False)
class SweepEntry:
    k: int
    fit: FitResult
    dominant: int


def k_sweep(ds: CohortDataset, ks, config: FitConfig, threshold: float = DEFAULT_DOMINANCE,
            workers: int | None = None) -> list[SweepEntry]:
    """Independent fits for each K, each seeded from ``(config.seed, K)``."""
    ks = [int(k) for k in ks]
    if not ks:
        raise DomainError("ks must be nonempty")

    def one(k: int) -> SweepEntry:
        cfg = replace(config, k=k, seed=derive_seed(config.seed, SWEEP_STREAM, k))
        result = fit(ds, cfg, workers=1)
        return SweepEntry(k, result, dominant_cluster_count(result.params, threshold))

    workers = default_workers() if workers is None else max(1, workers)
    if workers > 1 and len(ks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, ks))
    return [one(k) for k in ks]


def alignment_cost(a: MixtureParams, b: MixtureParams) -> np.ndarray:
    """Square L1 cost matrix between lambda rows, padded with zero-cost dummies."""
    if a.m != b.m:
        raise DimensionError(f"cannot align fits with M={a.m} and M={b.m}")
    size = max(a.k, b.k)
    cost = np.zeros((size, size))
    cost[:a.k, :b.k] = np.abs(a.lam[:, None, :] - b.lam[None, :, :]).sum(axis=2)
    return cost


def _lexicographic_assignment(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost assignment; among optima, the lexicographically smallest."""
    size = cost.shape[0]
    rows, cols = linear_sum_assignment(cost)
    best = cost[rows, cols].sum()
    tol = 1e-9 * max(1.0, abs(best))
    perm = np.full(size, -1)
    free = list(range(size))
    spent = 0.0
    for i in range(size):
        rest_rows = np.arange(i + 1, size)
        for j in free:
            rest_cols = np.array([c for c in free if c != j], dtype=int)
            rest = 0.0
            if rest_rows.size:
                sub = cost[np.ix_(rest_rows, rest_cols)]
                r, c = linear_sum_assignment(sub)
                rest = sub[r, c].sum()
            if spent + cost[i, j] + rest <= best + tol:
                perm[i] = j
                spent += cost[i, j]
                free.remove(j)
                break
    return perm


def align_clusters(a: MixtureParams, b: MixtureParams) -> np.ndarray:
    """Match clusters of ``b`` to clusters of ``a`` by exact optimal assignment.

    Returns ``perm`` with ``perm[j]`` the index in ``b`` matched to cluster
    ``j`` of ``a``, minimizing the summed L1 distance between lambda rows.
    When K differs, the smaller fit is padded with dummy clusters, so entries
    ``>= b.k`` (or positions ``>= a.k``) denote dummies. Ties resolve to the
    lexicographically smallest permutation.
    """
    return _lexicographic_assignment(alignment_cost(a, b))


@dataclass(frozen=True)
class Swing:
    patient_id: int
    pattern: tuple
    cluster_a: int
    prob_a: float
    cluster_b: int
    prob_b: float

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "pattern": list(self.pattern),
            "cluster_a": self.cluster_a,
            "prob_a": self.prob_a,
            "cluster_b": self.cluster_b,
            "prob_b": self.prob_b,
        }


@dataclass(frozen=True, eq=False)
class ClusterFlow:
    """Cross-tabulation of two fits over their shared patients.

    ``flow[a, b]`` counts patients in cluster ``a`` of fit A and cluster ``b``
    of fit B (original labels). ``alignment[b]`` is the fit-A cluster that
    B's cluster ``b`` was matched to, or -1 when it matched a dummy.
    """

    alignment: np.ndarray
    flow: np.ndarray
    swings: tuple[Swing, ...]
    shared_ids: np.ndarray

    @property
    def k_a(self) -> int:
        return self.flow.shape[0]

    @property
    def k_b(self) -> int:
        return self.flow.shape[1]

    def is_aligned(self, a: int, b: int) -> bool:
        return int(self.alignment[b]) == a

    def right_order(self) -> list[int]:
        """B clusters ordered by the A cluster they align to; unmatched last."""
        keyed = [(self.alignment[b] if self.alignment[b] >= 0 else self.k_a + b, b)
                 for b in range(self.k_b)]
        return [b for _, b in sorted(keyed)]

    def links(self) -> list[dict]:
        return [{"source": a, "target": b, "count": int(self.flow[a, b]),
                 "aligned": self.is_aligned(a, b)}
                for a in range(self.k_a) for b in range(self.k_b) if self.flow[a, b] > 0]

    def swing_types(self) -> list[tuple[tuple, int]]:
        counts = Counter(s.pattern for s in self.swings)
        return sorted(counts.items(), key=lambda kv: (-kv[1], [(-1 if v is None else v) for v in kv[0]]))

    def to_dict(self) -> dict:
        return {
            "alignment": self.alignment.tolist(),
            "flow": self.flow.tolist(),
            "sizes_a": self.flow.sum(axis=1).tolist(),
            "sizes_b": self.flow.sum(axis=0).tolist(),
            "links": self.links(),
            "shared_patients": int(self.shared_ids.size),
            "shared_ids": self.shared_ids.tolist(),
            "swings": [s.to_dict() for s in self.swings],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "ClusterFlow":
        swings = tuple(Swing(s["patient_id"], tuple(s["pattern"]), s["cluster_a"], s["prob_a"],
                             s["cluster_b"], s["prob_b"]) for s in obj["swings"])
        flow = np.array(obj["flow"], dtype=np.int64)
        shared = np.array(obj["shared_ids"], dtype=np.int64)
        return cls(np.array(obj["alignment"], dtype=np.int64), flow, swings, shared)

    @classmethod
    def from_json(cls, text: str) -> "ClusterFlow":
        return cls.from_dict(json.loads(text))


def sankey_flows(fit_a: FitResult, fit_b: FitResult, ids_a=None, ids_b=None) -> ClusterFlow:
    """Patient flow from fit A's clusters to fit B's, with B relabelled onto A.

    ``ids_a``/``ids_b`` default to the patient ids each fit was run on.
    Swings are shared patients whose B cluster is not aligned to their A
    cluster.
    """
    ids_a = np.asarray(fit_a.patient_ids if ids_a is None else ids_a, dtype=np.int64)
    ids_b = np.asarray(fit_b.patient_ids if ids_b is None else ids_b, dtype=np.int64)
    if ids_a.size != fit_a.hard_assignment.size or ids_b.size != fit_b.hard_assignment.size:
        raise DimensionError("id lists must match the number of fitted patients")
    where_b = {int(p): i for i, p in enumerate(ids_b)}
    shared = [(i, where_b[int(p)]) for i, p in enumerate(ids_a) if int(p) in where_b]
    if not shared:
        raise BernmixError("the two fits share no patients")

    perm = align_clusters(fit_a.params, fit_b.params)
    ka, kb = fit_a.params.k, fit_b.params.k
    b_to_a = np.full(kb, -1, dtype=np.int64)
    for a, b in enumerate(perm):
        if a < ka and b < kb:
            b_to_a[b] = a

    flow = np.zeros((ka, kb), dtype=np.int64)
    swings = []
    for ia, ib in shared:
        ca, cb = int(fit_a.hard_assignment[ia]), int(fit_b.hard_assignment[ib])
        flow[ca, cb] += 1
        if b_to_a[cb] != ca:
            swings.append(Swing(int(ids_a[ia]), tuple(fit_a.data.row_pattern(ia)), ca,
                                float(fit_a.assignment_prob[ia]), cb, float(fit_b.assignment_prob[ib])))
    shared_ids = np.array([ids_a[ia] for ia, _ in shared], dtype=np.int64)
    return ClusterFlow(b_to_a, flow, tuple(swings), shared_ids)
