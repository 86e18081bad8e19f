import itertools

import numpy as np
import pytest

from bernmix.analysis import (
    ClusterFlow,
    align_clusters,
    alignment_cost,
    dominant_cluster_count,
    k_sweep,
    sankey_flows,
)
from bernmix.core import MixtureParams
from bernmix.dataset import CohortDataset, complete_rows
from bernmix.em import FitConfig, fit
from bernmix.errors import BernmixError, DimensionError, DomainError
from bernmix.simulate import sample_dataset

from conftest import WHEEZE_PROFILES, WHEEZE_WEIGHTS
from oracles import all_permutations


def test_dominant_count_threshold_inclusive():
    assert dominant_cluster_count(np.array([0.05, 0.15, 0.8, 0.0])) == 3
    assert dominant_cluster_count(np.array([0.5, 0.5]), threshold=0.6) == 0
    with pytest.raises(DomainError):
        dominant_cluster_count(np.array([1.0]), threshold=0.0)


def test_dominant_count_from_params():
    assert dominant_cluster_count(MixtureParams(WHEEZE_PROFILES, WHEEZE_WEIGHTS)) == 4


def brute_force_alignment(a, b):
    cost = alignment_cost(a, b)
    best = min(all_permutations(cost.shape[0]),
               key=lambda p: (round(sum(cost[i, p[i]] for i in range(len(p))), 9), p))
    return np.array(best)


def test_alignment_matches_exhaustive_search(rng):
    for _ in range(30):
        k, m = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        a = MixtureParams(rng.random((k, m)), np.full(k, 1 / k))
        b = MixtureParams(rng.random((k, m)), np.full(k, 1 / k))
        assert np.array_equal(align_clusters(a, b), brute_force_alignment(a, b))


def test_alignment_recovers_permutation(rng):
    a = MixtureParams(WHEEZE_PROFILES, WHEEZE_WEIGHTS)
    perm = [2, 0, 3, 1]
    b = a.permuted(perm)
    # cluster j of a sits at position perm.index(j) in b
    assert align_clusters(a, b).tolist() == [perm.index(j) for j in range(4)]


def test_alignment_ties_lexicographic():
    a = MixtureParams([[0.5], [0.5], [0.5]], np.full(3, 1 / 3))
    assert align_clusters(a, a).tolist() == [0, 1, 2]


def test_alignment_unequal_k():
    a = MixtureParams(WHEEZE_PROFILES, WHEEZE_WEIGHTS)
    b = MixtureParams(WHEEZE_PROFILES[[3, 1]], [0.5, 0.5])
    perm = align_clusters(a, b)
    assert perm[3] == 0 and perm[1] == 1
    assert sorted(perm.tolist()) == [0, 1, 2, 3]
    with pytest.raises(DimensionError):
        align_clusters(a, MixtureParams([[0.5]], [1.0]))


@pytest.fixture(scope="module")
def wheeze_sample():
    return sample_dataset(4, 6, 800, seed=3, lambda_override=WHEEZE_PROFILES, r_override=WHEEZE_WEIGHTS,
                          missing_rates=0.08)


def test_sankey_flows_conservation(wheeze_sample):
    ds = wheeze_sample.data
    cfg = FitConfig(k=4, seed=1, restarts=5, map_smoothing=(1.5, 1.5))
    fa = fit(complete_rows(ds), cfg)
    fb = fit(ds, cfg)
    flow = sankey_flows(fa, fb)
    assert flow.flow.sum() == complete_rows(ds).n
    assert np.array_equal(flow.shared_ids, complete_rows(ds).patient_ids)
    assert flow.flow.sum(axis=1).tolist() == np.bincount(fa.hard_assignment, minlength=4).tolist()
    aligned = sum(flow.flow[flow.alignment[b], b] for b in range(flow.k_b) if flow.alignment[b] >= 0)
    assert len(flow.swings) == flow.flow.sum() - aligned
    for s in flow.swings:
        assert not flow.is_aligned(s.cluster_a, s.cluster_b)


def test_sankey_flow_identical_fits_have_no_swings(wheeze_sample):
    f = fit(wheeze_sample.data, FitConfig(k=4, seed=1, restarts=3))
    flow = sankey_flows(f, f)
    assert flow.swings == ()
    assert np.array_equal(np.diag(flow.flow), np.bincount(f.hard_assignment, minlength=4))
    assert flow.alignment.tolist() == [0, 1, 2, 3]


def test_sankey_flow_round_trip(wheeze_sample):
    f = fit(wheeze_sample.data, FitConfig(k=3, seed=1, restarts=2))
    g = fit(wheeze_sample.data, FitConfig(k=4, seed=2, restarts=2))
    flow = sankey_flows(f, g)
    back = ClusterFlow.from_json(flow.to_json())
    assert back.to_json() == flow.to_json()
    assert (flow.k_a, flow.k_b) == (3, 4)
    assert sorted(flow.right_order()) == [0, 1, 2, 3]


def test_sankey_flows_disjoint_patients():
    a = CohortDataset.from_rows([[1, 0], [0, 1]])
    f = fit(a, FitConfig(k=1, restarts=1))
    with pytest.raises(BernmixError):
        sankey_flows(f, f, ids_a=[0, 1], ids_b=[5, 6])


def test_k_sweep_independent_of_order_and_workers(wheeze_sample):
    cfg = FitConfig(k=1, seed=9, restarts=3, max_iter=100)
    one = k_sweep(wheeze_sample.data, [2, 4], cfg, workers=1)
    rev = k_sweep(wheeze_sample.data, [4, 2], cfg, workers=2)
    assert [e.k for e in one] == [2, 4]
    assert one[0].fit.to_json() == rev[1].fit.to_json()
    assert one[1].fit.to_json() == rev[0].fit.to_json()
    assert one[1].dominant == dominant_cluster_count(one[1].fit.params)
