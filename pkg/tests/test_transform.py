
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homotl.data import Dataset
from homotl.transform import (SourceStats, TargetRunningStats, TransformMatrix,
                              export_matrix, import_matrix, mean_differences, mmd_objective,
                              observe, project, regularized_objective, should_update,
                              update_matrix)
from oracles import check_gradient, gd_minimize, objective, random_stats


def stats_from(src_mean, tgt_mean):
    src = SourceStats(np.asarray(src_mean, float), np.zeros((1, len(src_mean))), np.zeros(1, int))
    tgt = TargetRunningStats(len(tgt_mean), 1)
    tgt.total = np.asarray(tgt_mean, float).copy()
    tgt.count = 1
    return src, tgt


def test_project_examples():
    x = np.array([2.0, 3.0])
    assert np.array_equal(project(TransformMatrix.identity(2), x), x)
    assert project(np.array([[1, 1], [0, 1]]), x).tolist() == [5.0, 3.0]
    with pytest.raises(ValueError):
        project(np.eye(3), x)


def test_project_batch_and_linear():
    r = np.random.default_rng(0)
    A, X = r.normal(size=(3, 5)), r.normal(size=(4, 5))
    np.testing.assert_allclose(project(A, X), np.array([project(A, x) for x in X]))
    np.testing.assert_allclose(project(A, 2 * X[0] - 3 * X[1]),
                               2 * project(A, X[0]) - 3 * project(A, X[1]), atol=1e-12)


def test_matrix_rejects_nan():
    with pytest.raises(ValueError):
        TransformMatrix(np.array([[np.nan]]))


def test_first_observation():
    s = observe(TargetRunningStats(2, 3), np.array([1.0, 2.0]), 1)
    assert s.count == 1
    assert s.overall_mean.tolist() == [1.0, 2.0]
    assert s.class_means[1].tolist() == [1.0, 2.0]


def test_same_class_mean():
    s = TargetRunningStats(2, 2)
    observe(s, np.array([1.0, 1.0]), 0)
    observe(s, np.array([3.0, 3.0]), 0)
    assert s.overall_mean.tolist() == [2.0, 2.0]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(1, 80), st.integers(0, 2**31))
def test_streaming_equals_batch(m, K, n, seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, m)) * r.uniform(0.1, 100)
    y = r.integers(0, K, n)
    s = TargetRunningStats(m, K)
    for x, c in zip(X, y):
        observe(s, x, int(c))
    np.testing.assert_allclose(s.overall_mean, X.mean(axis=0), rtol=1e-10, atol=1e-12)
    for k in range(K):
        if (y == k).any():
            np.testing.assert_allclose(s.class_means[k], X[y == k].mean(axis=0),
                                       rtol=1e-10, atol=1e-12)
    assert s.count == s.class_counts.sum()
    seen = s.class_counts > 0
    np.testing.assert_allclose(s.overall_mean * s.count,
                               (s.class_means[seen] * s.class_counts[seen, None]).sum(axis=0),
                               rtol=1e-10, atol=1e-9)


def test_observe_rejects_bad_label():
    with pytest.raises(ValueError):
        observe(TargetRunningStats(2, 2), np.zeros(2), 2)


def test_mmd_examples():
    src, tgt = stats_from([1.0, 0.0], [0.0, 0.0])
    assert mmd_objective(np.eye(2), src, tgt) == 1.0
    assert mmd_objective(2 * np.eye(2), src, tgt) == 4.0
    src, tgt = stats_from([0.3, 0.1], [0.3, 0.1])
    assert mmd_objective(np.eye(2), src, tgt) == 0.0


def test_unseen_classes_skipped():
    d = Dataset(np.array([[0.0], [2.0], [4.0]]), np.array([0, 1, 2]), 3)
    src = SourceStats.from_dataset(d)
    tgt = observe(TargetRunningStats(1, 3), np.array([1.0]), 1)
    D = mean_differences(src, tgt)
    # marginal gap and class 2 only
    assert D.tolist() == [[1.0], [1.0]]


def test_warm_stats_only_in_marginal():
    d = Dataset(np.array([[0.0], [2.0]]), np.array([0, 1]), 2)
    src = SourceStats.from_dataset(d)
    tgt = observe(TargetRunningStats(1, 2), np.array([1.0]), 1)
    tgt.add_pool(np.array([[3.0], [5.0]]))
    D = mean_differences(src, tgt)
    assert D[:, 0].tolist() == [1.0 - 3.0, 2.0 - 1.0]


def test_update_mu_zero_is_identity():
    r = np.random.default_rng(1)
    src, tgt = random_stats(r, 4, 3)
    A = r.normal(size=(3, 4))
    assert np.array_equal(update_matrix(A, src, tgt, 0.0).entries, A)


def test_update_scalar_example():
    src, tgt = stats_from([1.0], [0.0])
    assert update_matrix(np.array([[1.0]]), src, tgt, 1.0).entries[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_update_needs_target_data():
    r = np.random.default_rng(1)
    src, _ = random_stats(r, 3, 2)
    with pytest.raises(ValueError):
        update_matrix(np.eye(3), src, TargetRunningStats(3, 2), 1.0)


def test_update_3x4_matches_gd_oracle():
    r = np.random.default_rng(7)
    src, tgt = random_stats(r, 4, 3)
    A = r.normal(size=(3, 4))
    D = mean_differences(src, tgt)
    assert check_gradient(A, D, 1.0, r) < 1e-6
    B = update_matrix(A, src, tgt, 1.0).entries
    ref = gd_minimize(A, D, 1.0)
    assert objective(B, A, D, 1.0) <= objective(A, A, D, 1.0)
    assert objective(B, A, D, 1.0) == pytest.approx(objective(ref, A, D, 1.0), rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(1, 4),
       st.sampled_from([0.1, 1.0, 10.0]), st.integers(0, 2**31))
def test_update_optimal(m, d, K, mu, seed):
    r = np.random.default_rng(seed)
    src, tgt = random_stats(r, m, K)
    A = r.normal(size=(d, m))
    D = mean_differences(src, tgt)
    B = update_matrix(A, src, tgt, mu).entries
    # first-order condition
    assert np.abs((B - A) + mu * B @ D.T @ D).max() < 1e-8
    best = regularized_objective(B, A, D, mu)
    P = B + 1e-3 * r.normal(size=(1000, d, m))
    vals = np.sum((P - A) ** 2, axis=(1, 2)) + mu * np.sum((P @ D.T) ** 2, axis=(1, 2))
    assert np.all(vals >= best)
    # implied MMD bound
    assert mmd_objective(B, src, tgt) <= mmd_objective(A, src, tgt) + np.sum((A - B) ** 2) / mu \
        + 1e-9


def test_ill_conditioned_uses_pinv(caplog):
    src, tgt = stats_from([1e7, 0.0], [0.0, 0.0])
    A = np.eye(2)
    B = update_matrix(A, src, tgt, 1e3).entries
    assert "pseudo-inverse" in caplog.text
    G = np.eye(2) + 1e3 * np.outer([1e7, 0], [1e7, 0])
    np.testing.assert_allclose(B, A @ np.linalg.pinv(G), atol=1e-15)


def test_should_update():
    assert should_update(50, 50)
    assert not should_update(49, 50)
    assert all(should_update(t, 1) for t in range(1, 20))
    with pytest.raises(ValueError):
        should_update(1, 0)


def test_matrix_round_trip(tmp_path):
    A = TransformMatrix(np.random.default_rng(0).normal(size=(3, 5)), "amazon")
    export_matrix(A, tmp_path / "a.csv")
    B = import_matrix(tmp_path / "a.csv", expected_domain="amazon")
    assert B.source_domain == "amazon"
    np.testing.assert_allclose(B.entries, A.entries, rtol=0, atol=1e-12)


def test_matrix_malformed(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("3,5,x\n" + "1,2,3,4,5\n" * 2)
    with pytest.raises(ValueError, match="3x5"):
        import_matrix(p)


def test_matrix_domain_mismatch_warns(tmp_path):
    export_matrix(TransformMatrix(np.eye(2), "dslr"), tmp_path / "a.csv")
    with pytest.warns(UserWarning, match="dslr"):
        B = import_matrix(tmp_path / "a.csv", expected_domain="webcam")
    assert np.array_equal(B.entries, np.eye(2))
