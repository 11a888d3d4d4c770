"""Extrinsic evaluation: TF-IDF n-grams, multinomial logistic regression with
minority oversampling, and personalization by appending user vectors.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp, softmax

from .baselines import UserEmbeddings
from .corpus import SENTIMENTS

log = logging.getLogger(__name__)

CLASSES = SENTIMENTS


class ClassifyError(ValueError):
    pass


def ngrams(tokens, n_range=(1, 3)):
    lo, hi = n_range
    out = []
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            out.append(" ".join(tokens[i:i + n]))
    return out


@dataclass
class TfidfModel:
    feature_to_id: dict[str, int]
    doc_freq: np.ndarray
    idf: np.ndarray
    n_docs: int
    n_range: tuple[int, int] = (1, 3)
    max_features: int | None = 15000

    @property
    def features(self) -> list[str]:
        return sorted(self.feature_to_id, key=self.feature_to_id.get)

    def __len__(self) -> int:
        return len(self.feature_to_id)

    def counts(self, docs) -> sp.csr_matrix:
        """Raw n-gram counts restricted to the fitted features."""
        rows, cols, vals = [], [], []
        for r, tokens in enumerate(docs):
            c = Counter(f for f in ngrams(list(tokens), self.n_range) if f in self.feature_to_id)
            for f, n in c.items():
                rows.append(r)
                cols.append(self.feature_to_id[f])
                vals.append(n)
        return sp.csr_matrix((np.array(vals, dtype=np.float64), (rows, cols)),
                             shape=(len(docs), len(self)))

    def transform(self, docs) -> sp.csr_matrix:
        X = self.counts(docs) @ sp.diags(self.idf)
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        norms[norms == 0] = 1.0
        return sp.csr_matrix(sp.diags(1.0 / norms) @ X)


def fit_tfidf(docs, n_range=(1, 3), max_features: int | None = 15000, min_df: int = 1) -> TfidfModel:
    """Keep the ``max_features`` n-grams with the highest document frequency
    (ties lexicographic, None keeps all); smoothed idf = ln((1 + N) / (1 + df)) + 1.
    """
    docs = list(docs)
    if not docs:
        raise ClassifyError("no training documents")
    df = Counter()
    for tokens in docs:
        df.update(set(ngrams(list(tokens), n_range)))
    ranked = sorted(((f, c) for f, c in df.items() if c >= min_df), key=lambda kv: (-kv[1], kv[0]))
    if max_features is not None:
        ranked = ranked[:max_features]
    if not ranked:
        raise ClassifyError("empty feature vocabulary")
    # columns in lexicographic order, independent of the ranking
    kept = sorted(ranked)
    feature_to_id = {f: i for i, (f, _) in enumerate(kept)}
    doc_freq = np.array([c for _, c in kept], dtype=np.float64)
    n = len(docs)
    idf = np.log((1 + n) / (1 + doc_freq)) + 1
    return TfidfModel(feature_to_id, doc_freq, idf, n, tuple(n_range), max_features)


def oversample(X, y, seed: int = 0):
    """Duplicate minority-class rows (sampled with replacement) up to the majority count.

    Original rows come first, in order; duplicates are appended.
    """
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ClassifyError("oversampling needs at least two classes")
    rng = np.random.default_rng(seed)
    target = counts.max()
    extra = []
    for c, n in zip(classes, counts):
        if n < target:
            members = np.flatnonzero(y == c)
            extra.append(rng.choice(members, size=target - n, replace=True))
    idx = np.concatenate([np.arange(len(y))] + extra) if extra else np.arange(len(y))
    Xo = X[idx] if not sp.issparse(X) else sp.csr_matrix(X)[idx]
    return Xo, y[idx]


@dataclass
class LogRegConfig:
    C: float = 1.0
    max_iter: int = 1000
    tol: float = 1e-4
    seed: int = 0


@dataclass
class LogRegModel:
    weights: np.ndarray           # (n_features, n_classes)
    bias: np.ndarray              # (n_classes,)
    classes: tuple[str, ...] = CLASSES
    config: LogRegConfig = field(default_factory=LogRegConfig)
    converged: bool = True
    n_iter: int = 0
    final_loss: float = float("nan")

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X @ self.weights) + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes, dtype=object)[np.argmax(self.decision_function(X), axis=1)]


def logreg_objective(W, b, X, Y, C: float):
    """Mean cross-entropy plus ||W||^2 / (2 C N), with its gradients.

    This is the summed loss with 1/(2C) weight decay, divided by N.
    """
    n = X.shape[0]
    Z = np.asarray(X @ W) + b
    lse = logsumexp(Z, axis=1)
    loss = (lse.sum() - np.sum(Z * Y)) / n + np.sum(W * W) / (2 * C * n)
    P = np.exp(Z - lse[:, None])
    G = P - Y
    gW = np.asarray(X.T @ G) / n + W / (C * n)
    gb = G.sum(axis=0) / n
    return loss, gW, gb


def train_logreg(X, y, config: LogRegConfig | None = None, classes=CLASSES) -> LogRegModel:
    """Full-batch gradient descent with Armijo backtracking.

    Stops when the gradient's max-norm drops below ``tol`` or after
    ``max_iter`` iterations (flagged as not converged).
    """
    config = config or LogRegConfig()
    y = np.asarray(y)
    col = {c: i for i, c in enumerate(classes)}
    unknown = set(y.tolist()) - set(col)
    if unknown:
        raise ClassifyError(f"labels outside the class set: {sorted(unknown)}")
    if sp.issparse(X):
        X = sp.csr_matrix(X, dtype=np.float64)
    else:
        X = np.asarray(X, dtype=np.float64)
        if not np.all(np.isfinite(X)):
            raise ClassifyError("feature matrix has non-finite entries")
    n, d = X.shape
    k = len(classes)
    Y = np.zeros((n, k))
    Y[np.arange(n), [col[c] for c in y]] = 1.0

    W = np.zeros((d, k))
    b = np.zeros(k)
    loss, gW, gb = logreg_objective(W, b, X, Y, config.C)
    step = 1.0
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        gnorm = max(np.abs(gW).max(initial=0.0), np.abs(gb).max(initial=0.0))
        if gnorm < config.tol:
            converged = True
            it -= 1
            break
        sq = np.sum(gW * gW) + np.sum(gb * gb)
        while True:
            W_new, b_new = W - step * gW, b - step * gb
            new_loss, new_gW, new_gb = logreg_objective(W_new, b_new, X, Y, config.C)
            if new_loss <= loss - 0.5 * step * sq or step < 1e-12:
                break
            step *= 0.5
        W, b, loss, gW, gb = W_new, b_new, new_loss, new_gW, new_gb
        step *= 2.0
    else:
        gnorm = max(np.abs(gW).max(initial=0.0), np.abs(gb).max(initial=0.0))
        converged = gnorm < config.tol
    if not converged:
        log.warning("logistic regression stopped after %d iterations without converging", it)
    return LogRegModel(W, b, tuple(classes), config, converged, it, float(loss))


def personalize(X_doc, doc_user_ids, embeddings: UserEmbeddings):
    """Append each document author's L2-normalized user vector to its row."""
    rows = []
    for u in doc_user_ids:
        if u not in embeddings:
            raise ClassifyError(f"no embedding for user {u!r}")
        v = embeddings[u]
        norm = np.linalg.norm(v)
        rows.append(v / norm if norm > 0 else v)
    U = np.vstack(rows) if rows else np.zeros((0, embeddings.dim))
    if sp.issparse(X_doc):
        return sp.hstack([X_doc, sp.csr_matrix(U)], format="csr")
    return np.hstack([np.asarray(X_doc), U])


@dataclass
class ClassifyReport:
    precision: float
    recall: float
    f1: float
    per_class: dict[str, dict[str, float]]
    support: dict[str, int]
    average: str = "weighted"
    method: str = ""
    dataset: str = ""

    def to_text(self) -> str:
        lines = ["method,dataset,class,precision,recall,f1,support"]
        for c, m in self.per_class.items():
            lines.append(f"{self.method},{self.dataset},{c},{m['precision']:.6f},{m['recall']:.6f},"
                         f"{m['f1']:.6f},{self.support[c]}")
        lines.append(f"{self.method},{self.dataset},{self.average} avg,{self.precision:.6f},"
                     f"{self.recall:.6f},{self.f1:.6f},{sum(self.support.values())}")
        return "\n".join(lines) + "\n"


def classification_report(y_true, y_pred, classes=CLASSES, average: str = "weighted") -> ClassifyReport:
    """Per-class precision/recall/F1 and their support-weighted (or macro) average.

    Undefined ratios (no predictions or no support) count as 0. Averages run
    over classes present in ``y_true``.
    """
    y_true = np.asarray(y_true, dtype=object)
    y_pred = np.asarray(y_pred, dtype=object)
    per, support = {}, {}
    for c in classes:
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        per[c] = {"precision": p, "recall": r, "f1": f}
        support[c] = tp + fn
    present = [c for c in classes if support[c] > 0]
    if average == "weighted":
        total = sum(support[c] for c in present)
        w = {c: support[c] / total for c in present}
    elif average == "macro":
        w = {c: 1 / len(present) for c in present}
    else:
        raise ClassifyError(f"unknown average {average!r}")
    avg = {m: sum(w[c] * per[c][m] for c in present) for m in ("precision", "recall", "f1")}
    return ClassifyReport(avg["precision"], avg["recall"], avg["f1"], per, support, average)


def evaluate(model: LogRegModel, X, y, average: str = "weighted") -> ClassifyReport:
    return classification_report(y, model.predict(X), model.classes, average)
