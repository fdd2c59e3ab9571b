import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from civiscope.classifier import (
    ClassifierSpec,
    EnsembleModel,
    assign_labels,
    bootstrap_indices,
    cross_validate,
    evaluate_predictions,
    gwet_agreement,
    load_model,
    logistic_gradient,
    logistic_loss,
    save_model,
    stratified_folds,
    train_ensemble,
    train_logistic,
)
from civiscope.model import ValidationError


def blobs(n=200, dim=4, sep=6.0, pos_frac=0.5, seed=0):
    rng = np.random.default_rng(seed)
    n_pos = int(n * pos_frac)
    X = rng.normal(size=(n, dim))
    X[:n_pos, 0] += sep
    y = np.zeros(n)
    y[:n_pos] = 1
    perm = rng.permutation(n)
    return X[perm], y[perm]


# ---------------------------------------------------------------------------
# logistic head

def test_zero_weights_give_half():
    X, y = blobs(50, seed=1)
    model = train_logistic(X, y, max_iter=0 + 1, tol=1e30)   # stops immediately: grad < huge tol
    probs = model.predict_proba(X)
    np.testing.assert_allclose(probs, 0.5)


def test_gradient_matches_central_finite_differences():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        n, d = 30, 5
        X = rng.normal(size=(n, d))
        y = (rng.random(n) < 0.4).astype(float)
        w = rng.normal(size=d)
        b = float(rng.normal())
        l2 = float(rng.random() * 0.1)
        gw, gb = logistic_gradient(w, b, X, y, l2)
        eps = 1e-6
        for k in range(d):
            e = np.zeros(d)
            e[k] = eps
            fd = (logistic_loss(w + e, b, X, y, l2) - logistic_loss(w - e, b, X, y, l2)) / (2 * eps)
            rel = abs(fd - gw[k]) / max(abs(fd), abs(gw[k]), 1e-8)
            worst = max(worst, rel)
        fdb = (logistic_loss(w, b + eps, X, y, l2) - logistic_loss(w, b - eps, X, y, l2)) / (2 * eps)
        worst = max(worst, abs(fdb - gb) / max(abs(fdb), abs(gb), 1e-8))
    assert worst < 1e-5


def test_separable_blobs_f1():
    X, y = blobs(300, sep=6.0, seed=2)
    model = train_logistic(X, y, l2=1e-4, max_iter=500)
    pred = assign_labels(model.predict_proba(X), 0.5)
    _, f1, _, _, _ = evaluate_predictions(y, pred)
    assert f1[1] >= 0.99


def test_loss_monotone_under_default_step():
    X, y = blobs(120, sep=1.0, seed=3)
    losses = [train_logistic(X, y, l2=1e-3, max_iter=m, tol=0).training_meta.final_loss
              for m in (1, 2, 5, 10, 50, 150)]
    assert all(a >= b - 1e-12 for a, b in zip(losses, losses[1:]))


def test_probability_strictly_monotone_in_logit():
    X, y = blobs(80, seed=4)
    model = train_logistic(X, y, max_iter=200)
    grid = np.linspace(-30, 30, 201)
    probs = model.predict_proba(np.outer(grid, np.linalg.pinv(model.weights[None, :])).reshape(len(grid), -1))
    # direct check on the sigmoid path instead: logits in a sane range map strictly
    from civiscope.classifier import _sigmoid
    vals = _sigmoid(grid)
    assert np.all(np.diff(vals) > 0)
    assert probs.shape[0] == len(grid)


def test_single_class_and_nonfinite_rejected():
    X = np.zeros((5, 2))
    with pytest.raises(ValidationError):
        train_logistic(X, np.ones(5))
    X[0, 0] = np.nan
    with pytest.raises(ValidationError):
        train_logistic(X, np.array([0, 1, 0, 1, 0]))


# ---------------------------------------------------------------------------
# ensemble

def test_degenerate_ensemble_equals_single_on_same_resample():
    X, y = blobs(100, seed=5)
    hyper = {"l2": 1e-3, "max_iter": 100}
    ens = train_ensemble(X, y, B=1, balance=False, hyper=hyper, seed=42)
    idx = bootstrap_indices(np.random.default_rng(42), y, balance=False)
    single = train_logistic(X[idx], y[idx], **hyper)
    np.testing.assert_allclose(ens.predict_proba(X), single.predict_proba(X), atol=1e-12)


def test_ensemble_is_mean_of_members():
    X, y = blobs(100, seed=6)
    ens = train_ensemble(X, y, B=5, hyper={"max_iter": 50}, seed=1)
    probs = ens.predict_proba(X)
    manual = np.mean([m.predict_proba(X) for m in ens.members], axis=0)
    np.testing.assert_allclose(probs, manual, atol=1e-15)
    assert np.all((probs > 0) & (probs < 1))


def test_balanced_ensemble_beats_single_recall_on_imbalanced_data():
    X, y = blobs(1000, sep=1.5, pos_frac=0.02, seed=7)
    hyper = {"l2": 1e-3, "max_iter": 200}
    single = train_logistic(X, y, **hyper)
    ens = train_ensemble(X, y, B=10, balance=True, hyper=hyper, seed=8)
    pos = y == 1
    recall_single = np.mean(assign_labels(single.predict_proba(X), 0.5)[pos])
    recall_ens = np.mean(assign_labels(ens.predict_proba(X), 0.5)[pos])
    assert recall_ens > recall_single


# ---------------------------------------------------------------------------
# thresholded labeling

def test_threshold_boundary_inclusive_at_070():
    assert assign_labels(np.array([0.70]), 0.7).tolist() == [1]
    assert assign_labels(np.array([0.69]), 0.7).tolist() == [0]
    assert assign_labels(np.array([0.0, 1.0, 0.7, 0.699]), 0.7).tolist() == [0, 1, 1, 0]


def test_assign_labels_validates():
    with pytest.raises(ValidationError):
        assign_labels(np.array([1.2]), 0.7)
    with pytest.raises(ValidationError):
        assign_labels(np.array([0.5]), 1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=30),
       st.floats(min_value=0.05, max_value=0.95), st.floats(min_value=0.05, max_value=0.95))
def test_assign_labels_idempotent_and_monotone(probs, t1, t2):
    probs = np.array(probs)
    lab = assign_labels(probs, t1)
    assert np.array_equal(assign_labels(lab.astype(float), 0.5), lab)   # idempotent on 0/1
    lo, hi = sorted((t1, t2))
    assert assign_labels(probs, hi).sum() <= assign_labels(probs, lo).sum()


# ---------------------------------------------------------------------------
# cross-validation

def test_perfect_classifier_weighted_f1_one():
    X, y = blobs(200, sep=8.0, seed=9)
    report = cross_validate(X, y, k=10, spec=ClassifierSpec(kind="single", max_iter=300), seed=0)
    assert report.weighted_f1 == pytest.approx(1.0)


def test_constant_negative_hand_computed_metrics():
    # 90 negatives, 10 positives, predict all negative:
    # F1_neg = 2*(0.9*1)/(0.9+1) = 18/19; weighted = 0.9*18/19 + 0.1*0
    y_true = np.array([0] * 90 + [1] * 10)
    y_pred = np.zeros(100, dtype=int)
    conf, f1, weighted, precision, recall = evaluate_predictions(y_true, y_pred)
    assert conf.tolist() == [[90, 0], [10, 0]]
    assert f1[1] == 0.0
    assert f1[0] == pytest.approx(18 / 19, abs=1e-12)
    assert weighted == pytest.approx(0.9 * 18 / 19, abs=1e-12)


def test_weighted_f1_recomputable_from_confusion():
    X, y = blobs(150, sep=2.0, seed=10)
    report = cross_validate(X, y, k=5, spec=ClassifierSpec(kind="single", max_iter=150), seed=3)
    conf = report.confusion
    support = conf.sum(axis=1)
    f1 = {}
    for cls in (0, 1):
        tp = conf[cls, cls]
        prec = tp / conf[:, cls].sum() if conf[:, cls].sum() else 0.0
        rec = tp / support[cls] if support[cls] else 0.0
        f1[cls] = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    expected = (support[0] * f1[0] + support[1] * f1[1]) / support.sum()
    assert report.weighted_f1 == expected        # exact, same floats
    assert int(conf.sum()) == 150


def test_stratified_folds_balanced():
    y = np.array([0] * 40 + [1] * 10)
    folds = stratified_folds(y, 5, seed=1)
    for fold in range(5):
        assert (y[folds == fold] == 1).sum() == 2
        assert (y[folds == fold] == 0).sum() == 8


def test_model_save_load_roundtrip(tmp_path):
    X, y = blobs(60, seed=11)
    single = train_logistic(X, y, l2=1e-3, max_iter=80)
    path = tmp_path / "m.txt"
    save_model(single, path, seed=5)
    loaded = load_model(path)
    np.testing.assert_allclose(loaded.predict_proba(X), single.predict_proba(X), atol=1e-15)
    ens = train_ensemble(X, y, B=3, hyper={"max_iter": 40}, seed=2)
    save_model(ens, path, seed=5)
    loaded = load_model(path)
    assert isinstance(loaded, EnsembleModel)
    np.testing.assert_allclose(loaded.predict_proba(X), ens.predict_proba(X), atol=1e-15)


# ---------------------------------------------------------------------------
# Gwet agreement; frozen values were hand-computed with exact fractions

def pairs_from_counts(a, b, c, d):
    """a: (1,1), b: (1,0), c: (0,1), d: (0,0)."""
    return [(1, 1)] * a + [(1, 0)] * b + [(0, 1)] * c + [(0, 0)] * d


def test_all_agree_gives_one():
    res = gwet_agreement([(1, 1)] * 7 + [(0, 0)] * 3)
    assert res.raw_agreement == 1.0
    assert res.coefficient == pytest.approx(1.0, abs=1e-12)


def test_binary_85pct_agreement_prevalence_03():
    # n=200: a=45, b=15, c=15, d=125 -> pa=0.85, pi=0.3, pe=2*0.3*0.7=0.42,
    # AC1 = (0.85-0.42)/0.58 = 43/58 (exact fractions)
    res = gwet_agreement(pairs_from_counts(45, 15, 15, 125))
    assert res.raw_agreement == pytest.approx(0.85, abs=1e-12)
    assert res.coefficient == pytest.approx(43 / 58, abs=1e-10)


def test_binary_90pct_agreement_prevalence_03():
    # a=25, b=5, c=5, d=65 -> pa=0.9, AC1 = (0.9-0.42)/0.58 = 24/29
    res = gwet_agreement(pairs_from_counts(25, 5, 5, 65))
    assert res.coefficient == pytest.approx(24 / 29, abs=1e-10)


def test_weighted_ac2_three_ordinal_categories():
    # counts N[k][l], linear weights w = 1 - |k-l|/2; hand computation in fractions:
    # pa = 67/80, T_w = 5, pe = 711/1280, AC2 = 361/569
    N = [[10, 3, 1], [2, 8, 2], [0, 4, 10]]
    pairs = []
    for k in range(3):
        for l in range(3):
            pairs += [(k, l)] * N[k][l]
    w = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.5], [0.0, 0.5, 1.0]])
    res = gwet_agreement(pairs, categories=[0, 1, 2], weights=w)
    assert res.raw_agreement == pytest.approx(67 / 80, abs=1e-12)
    assert res.coefficient == pytest.approx(361 / 569, abs=1e-10)


def test_gwet_symmetric_in_coders():
    pairs = pairs_from_counts(20, 10, 5, 65)
    swapped = [(b, a) for a, b in pairs]
    assert gwet_agreement(pairs).coefficient == pytest.approx(
        gwet_agreement(swapped).coefficient, abs=1e-14)


def test_gwet_degenerate_pe():
    # every rating in the same single category on one side cannot happen with
    # 2 categories; force pe=1 via weights: all-ones weight matrix
    pairs = pairs_from_counts(5, 5, 5, 5)
    res = gwet_agreement(pairs, weights=np.ones((2, 2)))
    assert res.coefficient is None
    assert res.note is not None


def test_gwet_needs_two_pairs():
    with pytest.raises(ValidationError):
        gwet_agreement([(1, 1)])
