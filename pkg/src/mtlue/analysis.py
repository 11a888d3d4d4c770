"""Language-variation analyses across genre domains: mutual-information
feature overlap and cross-group train/test classification grids.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .classify import LogRegConfig, fit_tfidf, ngrams, oversample, train_logreg, evaluate
from .corpus import ReviewSet

MI_TARGETS = ("sentiment", "genre")


class AnalysisError(ValueError):
    pass


def mutual_information(feature_presence, labels) -> float:
    """Empirical I(X;Y) in nats between two discrete sequences."""
    x = np.asarray(feature_presence)
    y = np.asarray(labels)
    if x.shape != y.shape or x.ndim != 1 or len(x) == 0:
        raise AnalysisError("feature_presence and labels must be equal-length non-empty vectors")
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    table = np.zeros((xi.max() + 1, yi.max() + 1))
    np.add.at(table, (xi, yi), 1)
    return mi_from_counts(table)


def mi_from_counts(table) -> float:
    """I(X;Y) from a joint count table (rows X, columns Y); 0 ln 0 = 0."""
    t = np.asarray(table, dtype=np.float64)
    n = t.sum()
    if n <= 0:
        raise AnalysisError("count table is empty")
    # ratio from count products so exact independence gives log(1) = 0 exactly
    expected = t.sum(axis=1, keepdims=True) * t.sum(axis=0, keepdims=True)
    nz = t > 0
    return float(max(0.0, np.sum(t[nz] / n * np.log(n * t[nz] / expected[nz]))))


def _presence_mi(X: sp.csr_matrix, labels: np.ndarray) -> np.ndarray:
    """MI of every binary column of ``X`` against ``labels``, vectorized."""
    n = X.shape[0]
    classes, yi = np.unique(labels, return_inverse=True)
    Y = sp.csr_matrix((np.ones(n), (np.arange(n), yi)), shape=(n, len(classes)))
    n1 = np.asarray((X.T @ Y).todense(), dtype=np.float64)            # present, per class
    ny = np.asarray(Y.sum(axis=0)).ravel()
    n0 = ny[None, :] - n1                                             # absent, per class
    nx1 = n1.sum(axis=1, keepdims=True)
    nx0 = n - nx1
    mi = np.zeros(X.shape[1])
    for joint, nx in ((n1, nx1), (n0, nx0)):
        with np.errstate(divide="ignore", invalid="ignore"):
            term = joint / n * np.log(joint * n / (nx * ny[None, :]))
        mi += np.where(joint > 0, term, 0.0).sum(axis=1)
    return np.maximum(mi, 0.0)


@dataclass(frozen=True)
class FeatureSet:
    genre: str
    features: tuple[str, ...]
    scores: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.features)


def unified_features(reviews: ReviewSet, n_range=(1, 3), min_df: int = 2):
    """Corpus-wide n-gram vocabulary (features in fewer than ``min_df`` documents
    dropped) and the binary document-by-feature presence matrix."""
    docs = [r.tokens for r in reviews]
    model = fit_tfidf(docs, n_range=n_range, max_features=None, min_df=min_df)
    X = model.counts(docs)
    X.data[:] = 1.0
    return model.features, sp.csr_matrix(X)


def top_features_per_genre(reviews: ReviewSet, genre: str, k: int = 1000, mi_target: str = "sentiment",
                           n_range=(1, 3), min_df: int = 2, _cache=None) -> FeatureSet:
    """Top-``k`` n-gram features of one genre by mutual information.

    ``mi_target="sentiment"`` scores features against the sentiment label
    within the genre's documents; ``"genre"`` scores them against genre
    membership over the whole corpus. Features absent from the genre's
    documents are never returned. Ties break lexicographically.
    """
    if mi_target not in MI_TARGETS:
        raise AnalysisError(f"mi_target must be one of {MI_TARGETS}")
    if genre not in reviews.retained_genres:
        raise AnalysisError(f"genre {genre!r} is not retained")
    in_genre = np.array([genre in r.genres for r in reviews])
    if in_genre.sum() < 2:
        raise AnalysisError(f"genre {genre!r} has fewer than 2 documents")
    features, X = _cache if _cache is not None else unified_features(reviews, n_range, min_df)

    if mi_target == "sentiment":
        Xg = X[np.flatnonzero(in_genre)]
        labels = np.array([r.sentiment for r in reviews], dtype=object)[in_genre]
        scores = _presence_mi(Xg, labels.astype(str))
    else:
        Xg = X[np.flatnonzero(in_genre)]
        scores = _presence_mi(X, in_genre)
    present = np.asarray(Xg.sum(axis=0)).ravel() > 0

    cand = np.flatnonzero(present)
    order = sorted(cand.tolist(), key=lambda j: (-scores[j], features[j]))[:k]
    return FeatureSet(genre, tuple(features[j] for j in order), tuple(float(scores[j]) for j in order))


def genre_feature_sets(reviews: ReviewSet, k: int = 1000, mi_target: str = "sentiment",
                       n_range=(1, 3), min_df: int = 2) -> list[FeatureSet]:
    cache = unified_features(reviews, n_range, min_df)
    return [top_features_per_genre(reviews, g, k, mi_target, n_range, min_df, _cache=cache)
            for g in reviews.retained_genres]


@dataclass
class DomainMatrix:
    labels: tuple[str, ...]
    values: np.ndarray
    kind: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join([self.kind] + list(self.labels)) + "\n")
        for g, row in zip(self.labels, self.values):
            buf.write(",".join([g] + [f"{v:.6f}" for v in row]) + "\n")
        return buf.getvalue()


def overlap_matrix(feature_sets: list[FeatureSet]) -> DomainMatrix:
    """M[i][j] = |F_i & F_j| / k with k the list length.

    When a genre has fewer than k surviving features, the larger of the two
    list sizes stands in for k so that identical lists still score 1.
    """
    if len(feature_sets) < 2:
        raise AnalysisError("overlap needs at least two genres")
    sets = [set(fs.features) for fs in feature_sets]
    G = len(sets)
    M = np.eye(G)
    for i in range(G):
        for j in range(i + 1, G):
            denom = max(len(sets[i]), len(sets[j]))
            M[i, j] = M[j, i] = len(sets[i] & sets[j]) / denom if denom else 0.0
    return DomainMatrix(tuple(fs.genre for fs in feature_sets), M, "overlap")


def downsample_groups(reviews: ReviewSet, seed: int = 0) -> dict[str, list]:
    """Per genre, shrink to the smallest group's user, item and document counts.

    Users are sampled first, then items among those users' reviews, and the
    surviving documents are finally trimmed to one common count.
    """
    rng = np.random.default_rng(seed)
    groups = {g: [r for r in reviews if g in r.genres] for g in reviews.retained_genres}
    n_users = min(len({r.user_id for r in docs}) for docs in groups.values())
    n_items = min(len({r.item_id for r in docs}) for docs in groups.values())

    kept = {}
    for g, docs in groups.items():
        users = sorted({r.user_id for r in docs})
        chosen = set(rng.choice(users, size=n_users, replace=False).tolist())
        docs = [r for r in docs if r.user_id in chosen]
        items = sorted({r.item_id for r in docs})
        chosen = set(rng.choice(items, size=min(n_items, len(items)), replace=False).tolist())
        kept[g] = [r for r in docs if r.item_id in chosen]
    n_docs = min(len(d) for d in kept.values())
    for g, docs in kept.items():
        idx = np.sort(rng.choice(len(docs), size=n_docs, replace=False))
        kept[g] = [docs[i] for i in idx]
    return kept


def crossgroup_grid(reviews: ReviewSet, seed: int = 0, test_ratio: float = 0.2,
                    max_features: int = 15000, logreg: LogRegConfig | None = None,
                    average: str = "weighted") -> DomainMatrix:
    """Train a sentiment classifier per genre group and test it on every group.

    Row = training group, column = test group, entry = F1 on that test split.
    """
    genres = reviews.retained_genres
    if len(genres) < 2:
        raise AnalysisError("cross-group analysis needs at least two genres")
    groups = downsample_groups(reviews, seed)
    for g, docs in groups.items():
        if len(docs) < 10:
            raise AnalysisError(f"genre {g!r} keeps only {len(docs)} documents after downsampling")

    rng = np.random.default_rng(seed)
    parts = {}
    for g, docs in groups.items():
        order = rng.permutation(len(docs))
        n_test = max(1, math.floor(len(docs) * test_ratio + 1e-9))
        parts[g] = ([docs[i] for i in order[n_test:]], [docs[i] for i in order[:n_test]])

    M = np.zeros((len(genres), len(genres)))
    for i, g in enumerate(genres):
        train_docs, _ = parts[g]
        tfidf = fit_tfidf([r.tokens for r in train_docs], max_features=max_features)
        X = tfidf.transform([r.tokens for r in train_docs])
        y = np.array([r.sentiment for r in train_docs], dtype=object)
        if len(set(y.tolist())) >= 2:
            X, y = oversample(X, y, seed)
        model = train_logreg(X, y, logreg)
        for j, h in enumerate(genres):
            test_docs = parts[h][1]
            Xt = tfidf.transform([r.tokens for r in test_docs])
            yt = [r.sentiment for r in test_docs]
            M[i, j] = evaluate(model, Xt, yt, average).f1
    return DomainMatrix(tuple(genres), M, "crossgroup_f1")


__all__ = [
    "AnalysisError", "DomainMatrix", "FeatureSet", "crossgroup_grid", "downsample_groups",
    "genre_feature_sets", "mi_from_counts", "mutual_information", "ngrams", "overlap_matrix",
    "top_features_per_genre", "unified_features",
]
