import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import unit_rows
from oracles import nearest_neighbor_ids
from oracles import pairwise_f1 as f1_oracle
from gaitdccr.metrics import (
    NoMatchableClusterError,
    centroid_mse,
    label_accuracy,
    majority_identity,
    noise_fraction,
    pairwise_f1,
    rank1,
    true_centroids,
)

A, B = 0, 1


def test_f1_perfect_and_singletons():
    assert pairwise_f1([0, 0, 1, 1], [5, 5, 7, 7]) == 1.0
    assert pairwise_f1([0, 1, 2, 3], [5, 5, 7, 7]) == 0.0
    assert pairwise_f1([-1, -1, -1], [1, 1, 1]) == 0.0


def test_f1_merged_cluster_example():
    # {A1, A2} and {A3, B1, B2, B3}: TP 4 of 7 predicted and 6 true pairs
    labels = [0, 0, 1, 1, 1, 1]
    truth = [A, A, A, B, B, B]
    assert pairwise_f1(labels, truth) == pytest.approx(16 / 26, abs=1e-12)
    assert pairwise_f1(labels, truth) == pytest.approx(f1_oracle(labels, truth), abs=1e-12)


def test_f1_noise_costs_recall():
    labels = [0, 0, -1, 1, 1, 1]
    truth = [A, A, A, B, B, B]
    # 4 predicted pairs all correct, 6 true pairs
    assert pairwise_f1(labels, truth) == pytest.approx(2 * 1 * (4 / 6) / (1 + 4 / 6))


@given(st.lists(st.integers(-1, 3), min_size=2, max_size=30), st.integers(0, 10_000))
def test_f1_matches_pair_enumeration(labels, seed):
    truth = np.random.default_rng(seed).integers(0, 3, len(labels)).tolist()
    assert pairwise_f1(labels, truth) == pytest.approx(f1_oracle(labels, truth), abs=1e-12)


@given(st.lists(st.integers(-1, 3), min_size=2, max_size=20), st.permutations(range(4)))
def test_f1_invariant_to_cluster_renaming(labels, perm):
    truth = [i % 3 for i in range(len(labels))]
    renamed = [perm[l] if l >= 0 else -1 for l in labels]
    assert pairwise_f1(renamed, truth) == pytest.approx(pairwise_f1(labels, truth))


def test_mse_exact_recovery_zero(rng):
    f = unit_rows(rng, 6, 4)
    ids = np.array([3, 3, 3, 8, 8, 8])
    _, cents = true_centroids(f, ids)
    assert centroid_mse(cents, [0, 0, 0, 1, 1, 1], ids, f) == pytest.approx(0.0, abs=1e-24)


def test_mse_orthogonal_offset():
    # a unit centroid at angle theta from the truth has squared error 2 - 2 cos(theta)
    f = np.array([[1.0, 0.0]] * 3)
    theta = 0.3
    c = np.array([[np.cos(theta), np.sin(theta)]])
    assert centroid_mse(c, [0, 0, 0], [1, 1, 1], f) == pytest.approx(2 - 2 * np.cos(theta))


def test_mse_weighted_beats_average_with_outlier():
    base = np.array([1.0, 0.0])
    outlier = np.array([0.0, 1.0])
    f = np.stack([base, base, base, outlier])
    ids = np.array([0, 0, 0, 1])  # outlier is a different identity wrongly clustered
    labels = np.zeros(4, dtype=int)
    avg = f.mean(axis=0)
    avg /= np.linalg.norm(avg)
    w = np.array([0.3, 0.3, 0.3, 0.1]) @ f
    w /= np.linalg.norm(w)
    assert centroid_mse(w[None], labels, ids, f) < centroid_mse(avg[None], labels, ids, f)


def test_mse_no_clusters():
    with pytest.raises(NoMatchableClusterError):
        centroid_mse(np.zeros((0, 2)), [-1], [0], np.eye(2)[:1])


def test_majority_ties_to_smaller_identity():
    assert majority_identity([0, 0, 1, 1], [9, 4, 2, 2]).tolist() == [4, 2]


def test_label_accuracy_and_noise():
    assert label_accuracy([0, 0, 0, -1], [1, 1, 2, 2]) == pytest.approx(2 / 3)
    assert noise_fraction([0, -1, -1, 2]) == 0.5
    assert label_accuracy([-1, -1], [0, 1]) == 0.0


@given(st.integers(0, 10_000))
def test_rank1_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    g, p = unit_rows(rng, 8, 4), unit_rows(rng, 5, 4)
    gid, pid = rng.integers(0, 3, 8), rng.integers(0, 3, 5)
    dist = [[1 - sum(a * b for a, b in zip(x, y)) for y in g] for x in p]
    want = np.mean(np.array(nearest_neighbor_ids(dist, gid.tolist())) == pid)
    assert rank1(g, gid, p, pid) == pytest.approx(want)


@given(st.integers(0, 10_000))
def test_rank1_rotation_and_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    g, p = unit_rows(rng, 8, 4), unit_rows(rng, 5, 4)
    gid, pid = rng.integers(0, 3, 8), rng.integers(0, 3, 5)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    perm = rng.permutation(8)
    base = rank1(g, gid, p, pid)
    assert rank1(g @ q, gid, p @ q, pid) == pytest.approx(base)
    assert rank1(g[perm], gid[perm], p, pid) == pytest.approx(base)


def test_rank1_exclude_self():
    g = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert rank1(g, [0, 0, 1], g, [0, 0, 1], exclude_self=True) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        rank1(np.zeros((0, 2)), [], g, [0, 0, 1])
