from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelsr import degrade as dg
from kernelsr import kernelcluster as kc
from kernelsr import synth
from kernelsr.errors import FormatError, ParameterError
from oracles import brute_force_2means


def blobs(rng, centers, per, spread):
    x = np.concatenate([c + spread * rng.standard_normal((per, len(c))) for c in centers])
    return x, np.repeat(np.arange(len(centers)), per)


def same_partition(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


def naive_silhouette(x, labels):
    vals = []
    for i in range(len(x)):
        own = [j for j in range(len(x)) if labels[j] == labels[i] and j != i]
        if not own:
            vals.append(0.0)
            continue
        d = lambda j: float(np.sqrt(((x[i] - x[j]) ** 2).sum()))  # noqa: E731
        a = sum(d(j) for j in own) / len(own)
        b = min(np.mean([d(j) for j in range(len(x)) if labels[j] == c])
                for c in set(labels) if c != labels[i])
        vals.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return float(np.mean(vals))


def test_flatten_examples(rng):
    k = rng.random((33, 33))
    v = kc.flatten_kernel(k)
    assert v.shape == (1089,)
    assert np.flatnonzero(kc.flatten_kernel(dg.delta_kernel(33))).tolist() == [544]
    np.testing.assert_array_equal(kc.unflatten_kernel(v), k)
    with pytest.raises(ParameterError):
        kc.unflatten_kernel(np.zeros(1000))
    with pytest.raises(ParameterError):
        kc.kernel_side(16)


def test_kmeans_degenerate_fit(rng):
    x = rng.random((5, 9))
    cl = kc.kmeans(x, 5, seed=1)
    assert cl.inertia == 0.0
    assert sorted(map(tuple, cl.centers)) == sorted(map(tuple, x))


def test_kmeans_four_points_global_optimum():
    x = np.zeros((4, 1089))
    x[:, 0] = [0, 1, 10, 11]
    cl = kc.kmeans(x, 2, seed=0)
    assert sorted(cl.centers[:, 0].tolist()) == [0.5, 10.5]
    assert cl.inertia == pytest.approx(1.0, abs=1e-12)
    assert cl.inertia == pytest.approx(brute_force_2means(x), abs=1e-12)


def test_kmeans_random_small_sets_match_brute_force():
    for seed in range(5):
        x = np.random.default_rng(seed).random((7, 2))
        cl = kc.kmeans(x, 2, seed=seed, n_init=10)
        assert cl.inertia == pytest.approx(brute_force_2means(x), rel=1e-9)


def test_kmeans_determinism_and_errors(rng):
    x, _ = blobs(rng, [np.zeros(4), np.full(4, 5.0), np.r_[5.0, 0, 0, 0]], 10, 0.3)
    a, b = kc.kmeans(x, 3, seed=9), kc.kmeans(x, 3, seed=9)
    np.testing.assert_array_equal(a.assignments, b.assignments)
    np.testing.assert_array_equal(a.centers, b.centers)
    with pytest.raises(ParameterError):
        kc.kmeans(x[:2], 3)
    with pytest.raises(ParameterError):
        kc.kmeans(np.array([[0.0, np.nan]] * 4), 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**16), st.integers(1, 6))
def test_kmeans_invariants(seed, k):
    g = np.random.default_rng(seed)
    x = g.random((20, 3))
    cl = kc.kmeans(x, k, seed=seed, n_init=2)
    assert cl.assignments.min() >= 0 and cl.assignments.max() < k
    assert all(b <= a + 1e-12 for a, b in zip(cl.inertia_history, cl.inertia_history[1:]))
    assert kc.recompute_inertia(x, cl) == pytest.approx(cl.inertia, rel=1e-9, abs=1e-15)
    # Lloyd fixed point: each center is the mean of its members, and reassigning reproduces labels
    for j in range(k):
        m = cl.assignments == j
        if m.any():
            np.testing.assert_allclose(cl.centers[j], x[m].mean(0), atol=1e-12)
    assert [kc.assign(v, cl) for v in x] == cl.assignments.tolist()


def test_empty_cluster_reseeded():
    # duplicated points force empty clusters during seeding
    x = np.array([[0.0, 0.0]] * 6 + [[1.0, 0.0]] * 2 + [[5.0, 5.0]])
    cl = kc.kmeans(x, 3, seed=0)
    assert len(set(cl.assignments.tolist())) == 3


def test_blob_partition_recovered(rng):
    centers = [rng.random(16) * 20 for _ in range(5)]
    x, labels = blobs(rng, centers, 12, 0.05)
    cl = kc.kmeans(x, 5, seed=3)
    assert same_partition(cl.assignments, labels)


def test_assign_examples(rng):
    cl = kc.Clustering(rng.random((6, 4)), np.zeros(0, int), 0.0)
    assert kc.assign(cl.centers[3], cl) == 3
    centers = np.zeros((5, 2))
    centers[1] = [-1.0, 0.0]
    centers[4] = [1.0, 0.0]
    centers[[0, 2, 3]] = [[9, 9], [-9, 9], [9, -9]]
    assert kc.assign(np.array([0.0, 0.0]), kc.Clustering(centers, np.zeros(0, int), 0.0)) == 1
    with pytest.raises(ParameterError):
        kc.assign(np.zeros(3), cl)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**16))
def test_assign_translation_equivariant(seed):
    g = np.random.default_rng(seed)
    centers, v, t = g.random((4, 5)), g.random(5), g.standard_normal(5) * 3
    a = kc.assign(v, kc.Clustering(centers, np.zeros(0, int), 0.0))
    b = kc.assign(v + t, kc.Clustering(centers + t, np.zeros(0, int), 0.0))
    assert a == b


def test_silhouette_examples(rng):
    x, labels = blobs(rng, [np.zeros(3), np.full(3, 50.0)], 10, 0.1)
    cl = kc.kmeans(x, 2, seed=0)
    assert kc.silhouette_score(x, cl) > 0.9
    same = np.zeros((6, 3))
    forced = kc.Clustering(np.zeros((2, 3)), np.array([0, 0, 0, 1, 1, 1]), 0.0)
    assert kc.silhouette_score(same, forced) == 0.0
    relabeled = kc.Clustering(cl.centers[::-1], 1 - cl.assignments, cl.inertia)
    assert kc.silhouette_score(x, relabeled) == pytest.approx(kc.silhouette_score(x, cl), abs=1e-15)
    with pytest.raises(ParameterError):
        kc.silhouette_score(x, kc.kmeans(x, 1))


def test_silhouette_matches_naive(rng):
    x = rng.random((15, 3))
    cl = kc.kmeans(x, 3, seed=2)
    assert kc.silhouette_score(x, cl) == pytest.approx(naive_silhouette(x, cl.assignments.tolist()), abs=1e-12)


def test_sweep_reports_best_k(rng):
    x, _ = blobs(rng, [np.zeros(2), np.r_[10.0, 0], np.r_[0, 10.0], np.r_[10.0, 10]], 8, 0.2)
    sweep = kc.sweep_k(x, range(2, 7), seed=0)
    assert [r[0] for r in sweep] == [2, 3, 4, 5, 6]
    assert kc.best_k(sweep) == 4


# ---- PCA -------------------------------------------------------------------

def test_pca_planar_exact(rng):
    basis = np.linalg.qr(rng.standard_normal((30, 2)))[0].T
    coeff = rng.standard_normal((40, 2)) * [3.0, 1.0]
    x = coeff @ basis + rng.standard_normal(30)
    p = kc.pca2d(x)
    recon = p.mean + p.coords @ p.components
    np.testing.assert_allclose(recon, x, atol=1e-9)
    total = x.var(axis=0, ddof=1).sum()
    assert p.explained_variance.sum() == pytest.approx(total, rel=1e-9)


def test_pca_collinear_and_errors():
    x = np.outer([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert kc.pca2d(x).explained_variance[1] <= 1e-12
    with pytest.raises(ParameterError):
        kc.pca2d(np.ones((5, 3)))
    with pytest.raises(ParameterError):
        kc.pca2d(np.zeros((2, 3)))


def test_pca_duplication_invariant(rng):
    x = rng.random((10, 6))
    a, b = kc.pca2d(x), kc.pca2d(np.vstack([x, x]))
    np.testing.assert_allclose(a.components, b.components, atol=1e-10)
    np.testing.assert_allclose(np.vstack([a.coords, a.coords]), b.coords, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**16), st.integers(3, 25), st.integers(2, 12))
def test_pca_invariants(seed, n, d):
    x = np.random.default_rng(seed).standard_normal((n, d))
    p = kc.pca2d(x)
    np.testing.assert_allclose(p.components @ p.components.T, np.eye(2), atol=1e-9)
    assert p.explained_variance[0] >= p.explained_variance[1] >= 0
    eig = np.linalg.eigvalsh(np.cov(x, rowvar=False))[::-1][:2]
    np.testing.assert_allclose(p.explained_variance, eig, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(p.coords.var(axis=0, ddof=1), eig, rtol=1e-9, atol=1e-12)
    for c in p.components:
        assert c[np.argmax(np.abs(c))] > 0


# ---- files -----------------------------------------------------------------

def family_corpus():
    kernels, _ = synth.jittered_family(5, seed=0)
    return np.array([kc.flatten_kernel(k) for k in kernels])


def test_scatter_csv_35_rows_and_determinism(tmp_path):
    x = family_corpus()
    cl = kc.kmeans(x, 7, seed=0)
    p = kc.pca2d(x)
    labels = [f"k{i}" for i in range(35)]
    for run in ("a", "b"):
        kc.export_scatter(p, cl, labels, tmp_path / f"{run}.csv", tmp_path / f"{run}.svg")
    text = (tmp_path / "a.csv").read_text().splitlines()
    assert text[0] == "x,y,cluster,label" and len(text) == 36
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    kc.export_scatter(p, cl, [], tmp_path / "c.csv")
    rows = (tmp_path / "c.csv").read_text().splitlines()[1:]
    assert all(r.endswith(",") for r in rows)
    with pytest.raises(ParameterError):
        kc.export_scatter(p, cl, ["x"], tmp_path / "d.csv")


def test_clustering_file_round_trip(tmp_path):
    cl = kc.kmeans(family_corpus(), 7, seed=0)
    path = tmp_path / "c.src1"
    kc.save_clustering(cl, path)
    assert path.read_text().startswith("SRC1 7 1089\n")
    back = kc.load_clustering(path)
    np.testing.assert_array_equal(back.centers, cl.centers)
    path.write_text("SRC1 2 3\n1 2 3\n")
    with pytest.raises(FormatError):
        kc.load_clustering(path)
