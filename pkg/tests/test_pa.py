import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from homotl.data import Dataset
from homotl.pa import (PAModel, accuracy, load_model, margin_violation, pa_update,
                       predict_scores, save_model, step_size, train_offline,
                       train_online_mistakes)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def instance(draw, kmin=2):
    K = draw(st.integers(kmin, 5))
    d = draw(st.integers(1, 10))
    W = draw(arrays(float, (K, d), elements=finite))
    x = draw(arrays(float, d, elements=finite))
    y = draw(st.integers(0, K - 1))
    return PAModel(W), x, y


def test_zero_model_scores():
    assert np.array_equal(predict_scores(PAModel.zeros(4, 3), np.ones(3)), np.zeros(4))


def test_scores_example():
    m = PAModel(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert predict_scores(m, [3, 4]).tolist() == [3.0, 4.0]


def test_dimension_checked():
    with pytest.raises(ValueError):
        predict_scores(PAModel.zeros(2, 3), np.ones(4))


def test_needs_two_classes():
    with pytest.raises(ValueError):
        PAModel.zeros(1, 3)


def test_violation_tie_break():
    v = margin_violation(PAModel.zeros(3, 2), np.array([1.0, 2.0]), 0)
    assert (v.r, v.s, v.loss) == (0, 1, 1.0)


def test_violation_examples():
    m = PAModel(np.array([[1.5], [0.0]]))
    assert margin_violation(m, np.array([1.0]), 0).loss == 0.0
    m = PAModel(np.array([[0.2], [0.5], [0.1]]))
    assert margin_violation(m, np.array([1.0]), 0).loss == pytest.approx(1.3)


def test_update_unclipped_example():
    m = PAModel.zeros(3, 2)
    x = np.array([1.0, 0.0])
    pa_update(m, x, 0, C=5)
    assert m.weights.tolist() == [[0.5, 0.0], [-0.5, 0.0], [0.0, 0.0]]
    s = m.weights @ x
    # the updated pair meets the margin exactly; class 3 is now the worst rival
    assert 1 - s[0] + s[1] == 0.0
    assert margin_violation(m, x, 0) == (0, 2, 0.5)


def test_update_clipped_example():
    m = PAModel.zeros(3, 2)
    x = np.array([1.0, 0.0])
    pa_update(m, x, 0, C=0.1)
    assert m.weights[0].tolist() == [0.1, 0.0]
    s = m.weights @ x
    assert 1 - s[0] + s[1] == pytest.approx(0.8)
    assert margin_violation(m, x, 0).loss == pytest.approx(0.9)


def test_passive_when_no_loss():
    m = PAModel(np.array([[2.0, 0.0], [0.0, 0.0]]))
    before = m.weights.copy()
    assert pa_update(m, np.array([1.0, 0.0]), 0, 5).loss == 0.0
    assert np.array_equal(m.weights, before)


def test_zero_vector_is_noop():
    m = PAModel.zeros(3, 2)
    pa_update(m, np.zeros(2), 1, 5)
    assert not m.weights.any()


def test_step_size_rules():
    x = np.array([1.0, 1.0])
    assert step_size(1.0, x, 0.0, 5) == 0.25
    assert step_size(1.0, x, 0.0, 0.1) == 0.1
    assert step_size(0.5, x, 0.5, 5, "paper") == 1.0
    # the printed rule divides by a floored margin
    assert step_size(1.0, x, 0.0, 5, "paper") == 5
    with pytest.raises(ValueError):
        step_size(1.0, x, 0.0, 5, "other")
    with pytest.raises(ValueError):
        pa_update(PAModel.zeros(2, 2), x, 0, C=0)


@settings(max_examples=200, deadline=None)
@given(instance())
def test_update_touches_only_r_and_s(inst):
    m, x, y = inst
    before = m.weights.copy()
    v = pa_update(m, x, y, 5.0)
    others = [k for k in range(m.num_classes) if k not in (v.r, v.s)]
    assert np.array_equal(m.weights[others], before[others])
    np.testing.assert_allclose(m.weights.sum(axis=0), before.sum(axis=0), atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(instance(), st.floats(0.5, 3.0))
def test_scores_linear(inst, a):
    m, x, _ = inst
    np.testing.assert_allclose(predict_scores(m, a * x), a * predict_scores(m, x),
                               rtol=1e-12, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(instance())
def test_unclipped_update_closes_pair(inst):
    m, x, y = inst
    v = pa_update(m, x, y, C=1e12)
    if v.loss > 0 and x @ x > 1e-6:
        s = m.weights @ x
        assert abs(max(0.0, 1 - s[v.r] + s[v.s])) <= 1e-9 * max(1.0, np.abs(s).max())


@settings(max_examples=200, deadline=None)
@given(instance())
def test_clipped_update_decreases_loss(inst):
    m, x, y = inst
    before = margin_violation(m, x, y).loss
    pa_update(m, x, y, C=0.1)
    after = margin_violation(m, x, y).loss
    assert after <= before
    if before > 0 and x @ x > 1e-6:
        assert after < before
    if before == 0 or x @ x == 0:
        assert after == before


def test_binary_unclipped_reaches_zero_loss():
    r = np.random.default_rng(0)
    for _ in range(200):
        m = PAModel(r.normal(size=(2, 4)))
        x = r.normal(size=4)
        pa_update(m, x, 1, C=1e9)
        assert margin_violation(m, x, 1).loss <= 1e-12


def test_average_of_single_step():
    d = Dataset(np.array([[1.0, 2.0]]), np.array([1]), 2)
    avg = train_offline(d, 5.0)
    m = PAModel.zeros(2, 2)
    pa_update(m, d.X[0], 1, 5.0)
    assert np.array_equal(avg.weights, m.weights)


def test_average_of_iterates():
    r = np.random.default_rng(1)
    d = Dataset(r.normal(size=(30, 3)), r.integers(0, 3, 30), 3)
    avg = train_offline(d, 1.0, epochs=2, seed=4)
    m, total = PAModel.zeros(3, 3), np.zeros((3, 3))
    rs = np.random.Generator(np.random.PCG64(4))
    for _ in range(2):
        for i in rs.permutation(30):
            pa_update(m, d.X[i], int(d.y[i]), 1.0)
            total += m.weights
    np.testing.assert_allclose(avg.weights, total / 60, rtol=1e-12)


def test_separable_converges():
    r = np.random.default_rng(2)
    X = r.normal(size=(80, 2))
    X[:, 0] += np.where(np.arange(80) % 2, 3.0, -3.0)
    d = Dataset(X, np.arange(80) % 2, 2)
    errs = train_online_mistakes(d, 5.0, epochs=20, seed=0)
    assert errs[-1] == 0


def _last_iterate(d, C, seed):
    m = PAModel.zeros(d.num_classes, d.dim)
    for i in np.random.Generator(np.random.PCG64(seed)).permutation(len(d)):
        pa_update(m, d.X[i], int(d.y[i]), C)
    return m


def test_averaging_helps_on_noise():
    wins = 0
    for seed in range(10):
        r = np.random.default_rng(seed)
        means = r.normal(size=(3, 5)) * 1.5
        y = r.integers(0, 3, 600)
        X = means[y] + r.normal(size=(600, 5)) * 1.5
        train, test = Dataset(X[:300], y[:300], 3), Dataset(X[300:], y[300:], 3)
        wins += accuracy(train_offline(train, 5.0, seed=seed), test) >= \
            accuracy(_last_iterate(train, 5.0, seed), test)
    assert wins >= 7


def test_model_round_trip(tmp_path):
    m = PAModel(np.random.default_rng(0).normal(size=(3, 4)))
    save_model(m, tmp_path / "m.csv")
    assert np.array_equal(load_model(tmp_path / "m.csv").weights, m.weights)
