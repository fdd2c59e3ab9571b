"""Per-dimension binary classifiers on embeddings, evaluation, and coder agreement.

The encoder is fixed upstream (embeddings arrive as input files); here a
logistic head is trained by plain gradient descent from zero initialization so
runs are exactly reproducible. Class-imbalanced dimensions use a bagged
ensemble of class-balanced bootstrap members whose probabilities are averaged.
Evaluation pools out-of-fold predictions over stratified folds into a single
confusion matrix before computing F1, which avoids fold-level class dropouts
distorting the scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from civiscope.model import ConvergenceError, ValidationError


@dataclass(frozen=True)
class TrainingMeta:
    iterations: int
    final_loss: float
    converged: bool
    learning_rate: float


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2: float
    training_meta: TrainingMeta

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def predict_logit(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.predict_logit(X))


@dataclass(frozen=True)
class EnsembleModel:
    members: tuple

    @property
    def dim(self) -> int:
        return self.members[0].dim

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return np.mean([m.predict_proba(X) for m in self.members], axis=0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(weights, bias, X, y, l2):
    """Mean logistic loss plus (l2/2)||w||^2 (bias unpenalized)."""
    z = X @ weights + bias
    # log(1 + exp(-|z|)) + max(-yz·sign, ...) stable form: softplus(-s*z), s=±1
    s = 2.0 * y - 1.0
    m = -s * z
    loss = np.mean(np.logaddexp(0.0, m))
    return float(loss + 0.5 * l2 * np.dot(weights, weights))


def logistic_gradient(weights, bias, X, y, l2):
    """Analytic gradient of `logistic_loss` w.r.t. (weights, bias)."""
    n = X.shape[0]
    err = _sigmoid(X @ weights + bias) - y
    gw = X.T @ err / n + l2 * weights
    gb = float(np.sum(err) / n)
    return gw, gb


def _default_learning_rate(X: np.ndarray, l2: float) -> float:
    """1 / L for the loss's Lipschitz gradient bound, guaranteeing monotone descent."""
    n = X.shape[0]
    aug = np.hstack([np.ones((n, 1)), X])
    lam_max = float(np.linalg.eigvalsh(aug.T @ aug / n).max())
    return 1.0 / (0.25 * lam_max + l2)


def train_logistic(X, y, l2: float = 0.0, lr: Optional[float] = None, max_iter: int = 5000,
                   tol: float = 1e-8, seed: int = 0) -> LogisticModel:
    """Gradient descent on the regularized logistic loss from zero initialization.

    Stops when the gradient infinity-norm drops below `tol` or at `max_iter`.
    `lr=None` selects the inverse Lipschitz constant of the gradient, for
    which the loss decreases monotonically. `seed` is accepted for interface
    uniformity; plain GD from zeros is already deterministic.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError("train_logistic: X rows must match y length")
    if X.shape[0] < 2:
        raise ValidationError("train_logistic: need at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise ValidationError("train_logistic: non-finite feature")
    classes = np.unique(y)
    if not np.array_equal(classes, [0.0, 1.0]):
        raise ValidationError("train_logistic: both classes must be present and binary")
    if l2 < 0:
        raise ValidationError("train_logistic: l2 must be >= 0")

    step = _default_learning_rate(X, l2) if lr is None else float(lr)
    w = np.zeros(X.shape[1])
    b = 0.0
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        gw, gb = logistic_gradient(w, b, X, y, l2)
        gnorm = max(float(np.max(np.abs(gw))) if gw.size else 0.0, abs(gb))
        if gnorm < tol:
            converged = True
            break
        w = w - step * gw
        b = b - step * gb
    meta = TrainingMeta(iterations=iterations, final_loss=logistic_loss(w, b, X, y, l2),
                        converged=converged, learning_rate=step)
    return LogisticModel(weights=w, bias=float(b), l2=l2, training_meta=meta)


def bootstrap_indices(rng: np.random.Generator, y: np.ndarray, balance: bool) -> np.ndarray:
    """One bootstrap resample; balanced mode draws max-class-size samples per class."""
    y = np.asarray(y)
    n = y.shape[0]
    if not balance:
        return rng.integers(0, n, size=n)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    m = max(pos.size, neg.size)
    idx = np.concatenate([pos[rng.integers(0, pos.size, size=m)],
                          neg[rng.integers(0, neg.size, size=m)]])
    return idx


def train_ensemble(X, y, B: int = 10, balance: bool = True, hyper: Optional[dict] = None,
                   seed: int = 0) -> EnsembleModel:
    """Bag of B logistic members on (optionally class-balanced) bootstrap resamples."""
    if B < 1:
        raise ValidationError("train_ensemble: B must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    hyper = dict(hyper or {})
    rng = np.random.default_rng(seed)
    members = []
    for _ in range(B):
        idx = bootstrap_indices(rng, y, balance)
        members.append(train_logistic(X[idx], y[idx], **hyper))
    return EnsembleModel(members=tuple(members))


def assign_labels(probs, threshold: float = 0.7) -> np.ndarray:
    """Binary labels: 1 iff probability >= threshold (the boundary is inclusive)."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ValidationError("assign_labels: probabilities outside [0,1]")
    if not 0.0 < threshold < 1.0:
        raise ValidationError("assign_labels: threshold outside (0,1)")
    return (probs >= threshold).astype(int)


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "single"            # "single" | "ensemble"
    l2: float = 1e-3
    lr: Optional[float] = None
    max_iter: int = 5000
    tol: float = 1e-8
    ensemble_members: int = 10
    balance: bool = True

    def train(self, X, y, seed: int = 0):
        hyper = {"l2": self.l2, "lr": self.lr, "max_iter": self.max_iter, "tol": self.tol}
        if self.kind == "single":
            return train_logistic(X, y, seed=seed, **hyper)
        if self.kind == "ensemble":
            return train_ensemble(X, y, B=self.ensemble_members, balance=self.balance,
                                  hyper=hyper, seed=seed)
        raise ValidationError(f"unknown classifier kind {self.kind!r}")


@dataclass(frozen=True)
class EvalReport:
    confusion: np.ndarray           # rows true class, cols predicted, order (0, 1)
    f1_per_class: dict
    weighted_f1: float
    precision: dict
    recall: dict
    fold_assignment: np.ndarray
    single_class_folds: tuple       # fold ids whose training split lost a class
    spec: ClassifierSpec

    def as_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "f1_per_class": {str(k): v for k, v in self.f1_per_class.items()},
            "weighted_f1": self.weighted_f1,
            "precision": {str(k): v for k, v in self.precision.items()},
            "recall": {str(k): v for k, v in self.recall.items()},
            "single_class_folds": list(self.single_class_folds),
            "classifier": vars(self.spec),
        }


def evaluate_predictions(y_true, y_pred):
    """Pooled binary confusion matrix and the derived precision/recall/F1 set.

    Weighted F1 is the support-weighted mean of the two class F1 scores.
    """
    y_true = np.asarray(y_true, dtype=int).ravel()
    y_pred = np.asarray(y_pred, dtype=int).ravel()
    conf = np.zeros((2, 2), dtype=int)
    for t, p in zip(y_true, y_pred):
        conf[t, p] += 1
    f1 = {}
    precision = {}
    recall = {}
    for cls in (0, 1):
        tp = conf[cls, cls]
        fp = conf[1 - cls, cls]
        fn = conf[cls, 1 - cls]
        precision[cls] = tp / (tp + fp) if tp + fp else 0.0
        recall[cls] = tp / (tp + fn) if tp + fn else 0.0
        denom = precision[cls] + recall[cls]
        f1[cls] = 2 * precision[cls] * recall[cls] / denom if denom else 0.0
    support = conf.sum(axis=1)
    total = support.sum()
    weighted = float((support[0] * f1[0] + support[1] * f1[1]) / total) if total else 0.0
    return conf, f1, weighted, precision, recall


def stratified_folds(y, k: int, seed: int) -> np.ndarray:
    """Seed-shuffled round-robin fold assignment within each class."""
    y = np.asarray(y, dtype=int).ravel()
    rng = np.random.default_rng(seed)
    assignment = np.empty(y.shape[0], dtype=int)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        for pos, i in enumerate(idx):
            assignment[i] = pos % k
    return assignment


def cross_validate(X, y, k: int = 10, spec: Optional[ClassifierSpec] = None, seed: int = 0) -> EvalReport:
    """Stratified k-fold evaluation with predictions pooled across folds."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int).ravel()
    if k < 2:
        raise ValidationError("cross_validate: k must be >= 2")
    if X.shape[0] < k:
        raise ValidationError("cross_validate: need n >= k samples")
    spec = spec or ClassifierSpec()

    folds = stratified_folds(y, k, seed)
    y_pred = np.empty_like(y)
    bad_folds = []
    for fold in range(k):
        test = folds == fold
        train = ~test
        if np.unique(y[train]).size < 2:
            bad_folds.append(fold)
            y_pred[test] = 0
            continue
        model = spec.train(X[train], y[train], seed=seed + fold)
        y_pred[test] = assign_labels(model.predict_proba(X[test]), threshold=0.5)
    conf, f1, weighted, precision, recall = evaluate_predictions(y, y_pred)
    return EvalReport(confusion=conf, f1_per_class=f1, weighted_f1=weighted, precision=precision,
                      recall=recall, fold_assignment=folds, single_class_folds=tuple(bad_folds), spec=spec)


MODEL_FILE_VERSION = 1


def save_model(model, path, seed: int = 0) -> None:
    """Versioned text format: header (version, kind, dim, l2, seed, bias) + decimal weights."""
    members = model.members if isinstance(model, EnsembleModel) else (model,)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"civiscope-model v{MODEL_FILE_VERSION} kind={'ensemble' if len(members) > 1 else 'single'} "
                 f"members={len(members)} dim={members[0].dim} l2={members[0].l2!r} seed={seed}\n")
        for m in members:
            fh.write(f"bias {m.bias!r}\n")
            fh.write(" ".join(repr(v) for v in m.weights.tolist()) + "\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if not header or header[0] != "civiscope-model":
            raise ValidationError(f"{path}: not a civiscope model file")
        kv = dict(item.split("=", 1) for item in header[2:])
        n_members = int(kv["members"])
        l2 = float(kv["l2"])
        members = []
        for _ in range(n_members):
            bias_line = fh.readline().split()
            if len(bias_line) != 2 or bias_line[0] != "bias":
                raise ValidationError(f"{path}: malformed member block")
            bias = float(bias_line[1])
            weights = np.array([float(v) for v in fh.readline().split()])
            meta = TrainingMeta(iterations=0, final_loss=float("nan"), converged=True, learning_rate=float("nan"))
            members.append(LogisticModel(weights=weights, bias=bias, l2=l2, training_meta=meta))
    if len(members) == 1:
        return members[0]
    return EnsembleModel(members=tuple(members))


@dataclass(frozen=True)
class GwetResult:
    coefficient: Optional[float]
    raw_agreement: float
    note: Optional[str] = None


def gwet_agreement(pairs: Sequence, categories: Optional[Sequence] = None,
                   weights: Optional[np.ndarray] = None) -> GwetResult:
    """Gwet's chance-corrected agreement coefficient for two coders.

    raw_agreement is the weighted proportion of agreeing pairs; chance
    agreement is pe = (T_w / (q(q-1))) * sum_k pi_k (1 - pi_k), where pi_k is
    the mean classification probability of category k across the two coders
    and T_w the sum of all entries of the (symmetric, unit-diagonal)
    agreement-weight matrix. With identity weights this is the unweighted
    coefficient; binary categories give pe = 2*pi*(1-pi).
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValidationError("gwet_agreement: need at least 2 pairs")
    if categories is None:
        categories = sorted({v for pair in pairs for v in pair})
    categories = list(categories)
    q = len(categories)
    if q < 2:
        raise ValidationError("gwet_agreement: need at least 2 categories")
    index = {c: i for i, c in enumerate(categories)}

    if weights is None:
        weights = np.eye(q)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (q, q) or not np.allclose(weights, weights.T) or not np.allclose(np.diag(weights), 1.0):
        raise ValidationError("gwet_agreement: weights must be symmetric with unit diagonal")

    n = len(pairs)
    counts = np.zeros((q, q))
    for a, b in pairs:
        if a not in index or b not in index:
            raise ValidationError(f"gwet_agreement: label outside categories: {(a, b)!r}")
        counts[index[a], index[b]] += 1
    pa = float(np.sum(counts * weights) / n)
    pi = (counts.sum(axis=1) + counts.sum(axis=0)) / (2.0 * n)
    t_w = float(weights.sum())
    pe = t_w / (q * (q - 1)) * float(np.sum(pi * (1.0 - pi)))
    if pe >= 1.0:
        return GwetResult(coefficient=None, raw_agreement=pa, note="degenerate: chance agreement is 1")
    return GwetResult(coefficient=(pa - pe) / (1.0 - pe), raw_agreement=pa)
