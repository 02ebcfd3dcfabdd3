import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import unit_rows
from oracles import sigmoid
from gaitdccr.labels import (
    confidence_matrix,
    ctm_probabilities,
    fuse,
    latent_cluster_set,
    one_hot,
    refine_cpr,
    write_soft_labels_csv,
)


def centroids_at_distances(dists):
    """Unit sample e0 and one centroid per requested cosine distance."""
    f = np.zeros(len(dists) + 1)
    f[0] = 1.0
    rows = []
    for j, d in enumerate(dists):
        c = np.zeros(len(dists) + 1)
        c[0] = 1.0 - d
        c[j + 1] = np.sqrt(1.0 - (1.0 - d) ** 2)
        rows.append(c)
    return f, np.array(rows)


def test_confidence_single_cluster(rng):
    assert np.array_equal(confidence_matrix(unit_rows(rng, 3, 4), unit_rows(rng, 1, 4)), np.ones((3, 1)))


def test_confidence_equidistant_uniform():
    f, c = centroids_at_distances([0.4, 0.4, 0.4])
    assert np.allclose(confidence_matrix(f[None], c), 1 / 3)


def test_confidence_example():
    f, c = centroids_at_distances([1.0, 1.0])
    c[1] = -f  # distance 2
    row = confidence_matrix(f[None], c)[0]
    p = [sigmoid(-1.0), sigmoid(-2.0)]
    assert row == pytest.approx([p[0] / sum(p), p[1] / sum(p)], abs=1e-9)
    assert row == pytest.approx([0.6928902248571586, 0.30710977514284143], abs=1e-9)


@given(st.integers(0, 10_000))
def test_confidence_order_preserving(seed):
    rng = np.random.default_rng(seed)
    f, c = unit_rows(rng, 1, 5), unit_rows(rng, 4, 5)
    row = confidence_matrix(f, c)[0]
    d = 1 - (f @ c.T)[0]
    assert list(np.argsort(d, kind="stable")) == list(np.argsort(-row, kind="stable"))


def test_cpr_examples():
    y = np.array([[1.0, 0.0]])
    F = np.array([[0.6928902248571586, 0.30710977514284143]])
    assert np.array_equal(refine_cpr(y, F, 1.0), y)
    assert np.array_equal(refine_cpr(y, F, 0.0), F)
    assert refine_cpr(y, F, 0.4)[0] == pytest.approx([0.4 + 0.6 * F[0, 0], 0.6 * F[0, 1]], abs=1e-12)
    assert refine_cpr(y, F, 0.4)[0] == pytest.approx([0.8157341349142951, 0.18426586508570486], abs=1e-9)


@given(st.integers(0, 10_000), st.floats(0.5001, 1.0))
def test_cpr_keeps_argmax_above_half(seed, alpha):
    rng = np.random.default_rng(seed)
    conf = confidence_matrix(unit_rows(rng, 5, 4), unit_rows(rng, 6, 4))
    labels = rng.integers(0, 6, size=5)
    out = refine_cpr(one_hot(labels, 6), conf, alpha)
    assert np.array_equal(out.argmax(axis=1), labels)


def test_latent_set_examples():
    f, c = centroids_at_distances([0.1, 0.9, 0.3, 0.5])
    ids, d = latent_cluster_set(f, c, 2)
    assert ids.tolist() == [0, 2]
    assert d == pytest.approx([0.1, 0.3], abs=1e-12)
    ids, _ = latent_cluster_set(f, c, 4)
    assert ids.tolist() == [0, 2, 3, 1]
    ids, _ = latent_cluster_set(f, c[:1], 3)
    assert ids.tolist() == [0]


def test_latent_set_ties_to_lower_id():
    f, c = centroids_at_distances([0.5, 0.2, 0.2])
    c[2] = c[1]
    assert latent_cluster_set(f, c, 2)[0].tolist() == [1, 2]


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_latent_set_contains_matching_centroid_first(seed, k):
    rng = np.random.default_rng(seed)
    c = unit_rows(rng, 5, 4)
    j = int(rng.integers(5))
    ids, d = latent_cluster_set(c[j], c, k)
    assert ids[0] == j
    assert len(set(ids.tolist())) == min(k, 5)
    assert (np.diff(d) >= 0).all()


def test_ctm_examples():
    assert ctm_probabilities([2], [0.3], 4).tolist() == [0, 0, 1, 0]
    assert ctm_probabilities([0, 3], [0.2, 0.2], 4).tolist() == [0.5, 0, 0, 0.5]
    p = ctm_probabilities([1, 0], [0.1, 0.3], 3)
    a, b = sigmoid(-0.1), sigmoid(-0.3)
    assert p.tolist() == pytest.approx([b / (a + b), a / (a + b), 0.0], abs=1e-9)
    assert p.tolist() == pytest.approx([0.47253801831091435, 0.5274619816890855, 0.0], abs=1e-9)


def test_fuse_examples():
    P = np.array([[1.0, 0.0]])
    y = np.array([[0.8157341349142951, 0.18426586508570486]])
    assert np.array_equal(fuse(P, y, 0.0), y)
    assert np.array_equal(fuse(P, y, 1.0), P)
    assert fuse(P, y, 0.4)[0] == pytest.approx([0.4 + 0.6 * y[0, 0], 0.6 * y[0, 1]], abs=1e-12)
    assert fuse(P, y, 0.4)[0] == pytest.approx([0.8894404809485771, 0.11055951905142292], abs=1e-9)


@given(st.integers(0, 10_000), st.floats(0.01, 0.99))
def test_fuse_support_is_union(seed, beta):
    rng = np.random.default_rng(seed)
    P = np.where(rng.random((3, 5)) < 0.5, 0.0, rng.random((3, 5)))
    P[:, 0] += 0.1
    P /= P.sum(axis=1, keepdims=True)
    y = one_hot(rng.integers(0, 5, 3), 5)
    out = fuse(P, y, beta)
    assert np.array_equal(out > 0, (P > 0) | (y > 0))


@pytest.mark.parametrize("bad", [-0.1, 1.1])
def test_mixing_weight_range(bad):
    with pytest.raises(ValueError):
        refine_cpr(np.ones((1, 1)), np.ones((1, 1)), bad)
    with pytest.raises(ValueError):
        fuse(np.ones((1, 1)), np.ones((1, 1)), bad)


def test_one_hot_rejects_out_of_range():
    with pytest.raises(ValueError):
        one_hot([0, 3], 3)


def test_soft_label_csv(tmp_path):
    path = tmp_path / "l.csv"
    write_soft_labels_csv(path, ["a"], "one_hot", [[1.0, 0.0]])
    write_soft_labels_csv(path, ["a"], "fused", [[0.75, 0.25]], append=True)
    assert path.read_text() == "sample_id,stage,p0,p1\na,one_hot,1,0\na,fused,0.75,0.25\n"
    with pytest.raises(ValueError):
        write_soft_labels_csv(path, ["a"], "other", [[1.0]])
