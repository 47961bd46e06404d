import math

import numpy as np
import pytest
from conftest import permuted_null, separated_clusters
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm
from sklearn.base import clone
from sklearn.utils.estimator_checks import check_estimators_unfitted, check_get_params_invariance

from shrinklda.classifier import (
    DIFF,
    PERGROUP,
    LabeledDataset,
    PrecisionWhitener,
    ShrinkageLDA,
    classify,
    evaluate,
    fit_precision,
    fit_rule,
    fit_rule_diff,
    fit_rule_pergroup,
    loocv,
    loocv_grid,
    rule_from_means,
    score,
    whiten,
)
from shrinklda.exceptions import InsufficientData, InvalidInput, ShapeMismatch
from shrinklda.precision import IR, LAM, ORACLE, PrecisionEstimate
from shrinklda.shrinkage import HARD, NPEB, NPMLE, SM, shrink_npeb, shrink_npmle


def _prec(omega):
    return PrecisionEstimate.from_omega(np.asarray(omega, float), ORACLE)


def _random_train(seed, p=6, n=10, shift=1.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2 * n, p))
    x[n:] += shift
    return LabeledDataset(x, np.repeat([1, 2], n))


# -- dataset / whitening ----------------------------------------------------


def test_dataset_validation():
    with pytest.raises(ShapeMismatch):
        LabeledDataset(np.zeros((3, 2)), [1, 2])
    with pytest.raises(InvalidInput):
        LabeledDataset(np.zeros((2, 2)), [1, 3])
    d = LabeledDataset(np.arange(4.0), [1, 1, 2, 2])
    assert d.p == 1 and d.n1 == 2 and d.drop(0).n == 3


def test_whiten_examples():
    x = np.random.default_rng(0).standard_normal((4, 3))
    np.testing.assert_allclose(whiten(x, _prec(np.eye(3))), x, atol=1e-14)
    np.testing.assert_allclose(whiten(np.array([[1.5], [-2.0]]), _prec([[4.0]])), [[3.0], [-4.0]])
    with pytest.raises(ShapeMismatch):
        whiten(x, _prec(np.eye(2)))


def test_whitening_decorrelates_monte_carlo():
    omega = np.array([[2.0, 1.0], [1.0, 2.0]])
    rng = np.random.default_rng(1)
    x = rng.multivariate_normal(np.zeros(2), np.linalg.inv(omega), size=50_000)
    z = whiten(x, _prec(omega))
    np.testing.assert_allclose(np.cov(z.T), np.eye(2), atol=0.05)


# -- rules ------------------------------------------------------------------


def test_hand_example():
    rule = rule_from_means([1.0, 0.0], [-1.0, 0.0], 10, 10, np.eye(2))
    np.testing.assert_array_equal(rule.weights, [2.0, 0.0])
    assert rule.intercept == 0.0 and rule.prior_term == 0.0
    assert score(rule, [0.5, 3.0]) == pytest.approx(1.0)
    assert classify(rule, [0.5, 3.0]) == 1


def test_equal_means_go_to_majority():
    rule = rule_from_means([0.3, 0.3], [0.3, 0.3], 12, 8, np.eye(2))
    assert np.all(rule.weights == 0)
    x = np.random.default_rng(0).standard_normal((5, 2))
    np.testing.assert_allclose(score(rule, x), math.log(12 / 8))
    assert np.all(classify(rule, x) == 1)
    assert np.all(classify(rule_from_means([0.0], [0.0], 3, 5, np.eye(1)), np.ones((3, 1))) == 2)


def test_tie_break_and_sign_rule():
    rule = rule_from_means([1.0], [-1.0], 4, 4, np.eye(1))
    assert classify(rule, [0.0]) == 1
    assert classify(rule, [0.05]) == 1 and classify(rule, [-0.05]) == 2


def test_degenerate_rule_error_is_share_of_group_two():
    rule = rule_from_means([0.0, 0.0], [0.0, 0.0], 5, 5, np.eye(2))
    labels = np.array([1, 2, 2, 1, 2, 2, 2])
    rep = evaluate(rule, LabeledDataset(np.zeros((7, 2)), labels))
    assert rep.error_rate == pytest.approx(np.mean(labels == 2))


def test_score_is_affine():
    train = _random_train(0)
    rule = fit_rule(train, fit_precision(train, IR), NPEB)
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal((2, train.p))
    zero = np.zeros(train.p)
    assert score(rule, x + y) - score(rule, x) - score(rule, y) + score(rule, zero) == pytest.approx(0.0, abs=1e-10)
    assert score(rule, zero) == pytest.approx(rule.intercept + rule.prior_term)
    with pytest.raises(ShapeMismatch):
        score(rule, np.zeros(train.p + 1))


def test_zero_weights_score_equals_prior_term():
    rule = rule_from_means(np.zeros(3), np.zeros(3), 7, 3, np.eye(3))
    assert score(rule, np.array([4.0, -1.0, 2.0])) == pytest.approx(math.log(7 / 3))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_sample_mean_variants_agree(seed):
    train = _random_train(seed)
    prec = fit_precision(train, IR)
    a = fit_rule_diff(train, prec, SM)
    b = fit_rule_pergroup(train, prec, SM)
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)
    assert a.intercept == pytest.approx(b.intercept, abs=1e-10)
    x = np.random.default_rng(seed + 1).standard_normal((30, train.p))
    assert np.array_equal(classify(a, x), classify(b, x))


def test_scaling_weights_and_intercept_preserves_labels():
    train = _random_train(3)
    rule = fit_rule(train, fit_precision(train, IR), NPMLE)
    x = np.random.default_rng(4).standard_normal((50, train.p))
    before = classify(rule, x)
    rule.weights = 7 * rule.weights
    rule.intercept *= 7
    rule.prior_term *= 7
    assert np.array_equal(classify(rule, x), before)


@pytest.mark.parametrize("method", [SM, NPEB, NPMLE, HARD])
def test_pergroup_symmetric_data_has_zero_intercept(method):
    z = np.random.default_rng(5).standard_normal(20) + 1.0
    rule = rule_from_means(z, -z, 10, 10, np.eye(20), method, PERGROUP)
    assert rule.intercept == pytest.approx(0.0, abs=1e-8)


def test_shrunk_weights_compose_with_shrinkers():
    train = _random_train(6, p=15)
    prec = fit_precision(train, IR)
    sm = fit_rule_diff(train, prec, SM)
    sd = math.sqrt(1 / train.n1 + 1 / train.n2)
    np.testing.assert_allclose(fit_rule_diff(train, prec, NPEB).weights,
                               shrink_npeb(sm.weights, sd).estimates, atol=1e-12)
    z1 = whiten(train.group(1), prec).mean(0)
    z2 = whiten(train.group(2), prec).mean(0)
    expect = (shrink_npmle(z1, 1 / math.sqrt(train.n1)).estimates
              - shrink_npmle(z2, 1 / math.sqrt(train.n2)).estimates)
    np.testing.assert_allclose(fit_rule_pergroup(train, prec, NPMLE).weights, expect, atol=1e-12)


def test_rule_errors():
    train = LabeledDataset(np.zeros((3, 2)) + np.arange(3)[:, None], [1, 2, 2])
    with pytest.raises(InsufficientData):
        fit_precision(train, IR)
    ok = _random_train(0)
    with pytest.raises(InvalidInput):
        fit_rule(ok, fit_precision(ok, IR), "median")
    with pytest.raises(InvalidInput):
        fit_rule(ok, fit_precision(ok, IR), SM, "both")


def test_oracle_error_matches_normal_cdf():
    omega = np.array([[1.0, 0.3], [0.3, 1.0]])
    sigma = np.linalg.inv(omega)
    mu1, mu2 = np.array([1.0, 0.0]), np.array([-0.5, 0.8])
    half = np.linalg.cholesky(omega).T
    rule = rule_from_means(half @ mu1, half @ mu2, 10, 10, np.eye(2))
    rule.whitener = half.T  # z = half x, so score uses x @ half.T
    rng = np.random.default_rng(7)
    m = 200_000
    x = np.vstack([rng.multivariate_normal(mu1, sigma, m), rng.multivariate_normal(mu2, sigma, m)])
    rep = evaluate(rule, LabeledDataset(x, np.repeat([1, 2], m)))
    dist = math.sqrt((mu1 - mu2) @ omega @ (mu1 - mu2))
    assert rep.error_rate == pytest.approx(norm.cdf(-dist / 2), abs=0.02)


def test_report_consistency():
    train = _random_train(8)
    rule = fit_rule(train, fit_precision(train, IR), NPEB)
    rep = evaluate(rule, _random_train(9))
    assert 0 <= rep.error_rate <= 1
    assert rep.error_rate == (rep.confusion[0, 1] + rep.confusion[1, 0]) / rep.confusion.sum()
    assert rep.errors == rep.confusion[0, 1] + rep.confusion[1, 0]


# -- LOOCV ------------------------------------------------------------------


def test_loocv_separation_and_null():
    assert loocv(separated_clusters(), IR, SM).errors == 0
    assert abs(loocv(permuted_null(), IR, SM).error_rate - 0.5) <= 0.15


def test_loocv_determinism_and_grid():
    data = separated_clusters(seed=3, delta=1.5)
    cells = [(m, v) for m in (SM, NPEB, NPMLE) for v in (DIFF, PERGROUP)]
    a = loocv_grid(data, LAM, cells, seed=11)
    b = loocv_grid(data, LAM, cells, seed=11)
    assert set(a) == set(cells)
    for c in cells:
        assert np.array_equal(a[c].predicted, b[c].predicted)
    single = loocv(data, LAM, NPEB, PERGROUP, seed=11)
    assert np.array_equal(single.predicted, a[(NPEB, PERGROUP)].predicted)


def test_loocv_refits_without_held_out_row():
    data = separated_clusters(seed=4, delta=3.0)
    base = loocv(data, IR, NPEB)
    for i in (0, 25):
        train = data.drop(i)
        rule = fit_rule(train, fit_precision(train, IR), NPEB)
        assert base.predicted[i] == classify(rule, data.features[i])


def test_loocv_errors():
    with pytest.raises(InsufficientData):
        loocv(LabeledDataset(np.zeros((4, 2)), [1, 1, 2, 2]), IR)
    small = LabeledDataset(np.random.default_rng(0).standard_normal((5, 2)), [1, 1, 2, 2, 2])
    with pytest.raises(InsufficientData):
        loocv(small, IR)


def test_loocv_fast_mode_runs():
    data = separated_clusters(seed=2)
    assert loocv(data, LAM, NPEB, fast=True).errors == 0


# -- scikit-learn estimators ------------------------------------------------


def test_sklearn_api():
    data = separated_clusters(seed=5, delta=4.0)
    y = np.where(data.labels == 1, "a", "b")
    clf = ShrinkageLDA(precision="ir", mean="npmle").fit(data.features, y)
    assert list(clf.classes_) == ["a", "b"]
    assert clf.score(data.features, y) == 1.0
    pred = clf.predict(data.features)
    assert np.array_equal(pred == "b", clf.decision_function(data.features) > 0)
    np.testing.assert_allclose(data.features @ clf.coef_ + clf.intercept_, clf.discriminant(data.features))
    params = clone(clf).get_params()
    assert params["mean"] == "npmle" and params["precision"] == "ir"
    check_get_params_invariance("ShrinkageLDA", clf)
    check_estimators_unfitted("ShrinkageLDA", ShrinkageLDA())
    with pytest.raises(InvalidInput):
        ShrinkageLDA().fit(data.features, np.arange(data.n) % 3)


def test_precision_whitener():
    x = np.random.default_rng(0).standard_normal((30, 4))
    w = PrecisionWhitener(precision="ir").fit(x)
    np.testing.assert_allclose(w.transform(x).std(axis=0, ddof=1), 1.0, atol=1e-12)
    w = PrecisionWhitener(precision="oracle", omega=np.eye(4)).fit(x)
    np.testing.assert_allclose(w.transform(x), x)
    y = np.repeat([0, 1], 15)
    assert PrecisionWhitener(precision="lam").fit(x, y).transform(x).shape == (30, 4)
