"""Intrinsic evaluation: spectral clustering of user vectors scored by
pairwise genre-overlap F1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans

from .baselines import UserEmbeddings
from .vocab import EntityIndex

DEFAULT_KS = (4, 8, 12)


class ClusterError(ValueError):
    pass


def cosine_affinity(vectors: np.ndarray) -> np.ndarray:
    """Cosine similarity with negatives clamped to 0 and a unit diagonal."""
    X = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0)
    if len(zero):
        raise ClusterError(f"row {zero[0]} has zero norm")
    U = X / norms[:, None]
    A = np.clip(U @ U.T, 0.0, 1.0)
    A = (A + A.T) / 2
    np.fill_diagonal(A, 1.0)
    return A


def spectral_embedding(A: np.ndarray, k: int) -> np.ndarray:
    """Row-normalized eigenvectors of the k smallest eigenvalues of I - D^-1/2 A D^-1/2."""
    A = np.asarray(A, dtype=np.float64)
    deg = A.sum(axis=1)
    isolated = np.flatnonzero(deg <= 0)
    if len(isolated):
        raise ClusterError(f"node {isolated[0]} has zero degree")
    d = 1.0 / np.sqrt(deg)
    lap = np.eye(len(A)) - d[:, None] * A * d[None, :]
    try:
        _, vecs = np.linalg.eigh((lap + lap.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise ClusterError(f"eigensolver failed: {exc}") from exc
    emb = vecs[:, :k]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    return emb / np.where(norms == 0, 1.0, norms)


def spectral_cluster(A: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    n = len(A)
    if not 2 <= k <= n:
        raise ClusterError(f"need 2 <= k <= n, got k={k}, n={n}")
    emb = spectral_embedding(A, k)
    km = KMeans(n_clusters=k, init="k-means++", n_init=10, random_state=seed)
    return km.fit_predict(emb).astype(np.int64)


@dataclass
class PairCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


def _genre_matrix(user_genres) -> np.ndarray:
    genres = sorted({g for gs in user_genres for g in gs})
    col = {g: i for i, g in enumerate(genres)}
    M = np.zeros((len(user_genres), len(genres)), dtype=np.int64)
    for u, gs in enumerate(user_genres):
        if not gs:
            raise ClusterError(f"user {u} has an empty genre set")
        for g in gs:
            M[u, col[g]] = 1
    return M


def pairwise_genre_f1(labels, user_genres, sample_pairs: int | None = None,
                      seed: int = 0) -> tuple[float, PairCounts]:
    """F1 over unordered user pairs: gold = genre sets intersect, predicted = same cluster.

    All pairs are enumerated unless ``sample_pairs`` is given, in which case
    that many distinct-user pairs are drawn uniformly (seeded).
    """
    labels = np.asarray(labels)
    n = len(labels)
    if n != len(user_genres) or n < 2:
        raise ClusterError("labels and user_genres must have equal length >= 2")
    M = _genre_matrix(user_genres)

    if sample_pairs is None:
        gold = (M @ M.T) > 0
        same = labels[:, None] == labels[None, :]
        iu = np.triu_indices(n, 1)
        g, p = gold[iu], same[iu]
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(n, size=sample_pairs)
        j = (i + rng.integers(1, n, size=sample_pairs)) % n
        g = np.einsum("ij,ij->i", M[i], M[j]) > 0
        p = labels[i] == labels[j]

    counts = PairCounts(
        tp=int(np.count_nonzero(g & p)),
        fp=int(np.count_nonzero(~g & p)),
        fn=int(np.count_nonzero(g & ~p)),
        tn=int(np.count_nonzero(~g & ~p)),
    )
    return counts.f1, counts


@dataclass
class ClusterReport:
    method: str
    results: dict[int, dict] = field(default_factory=dict)

    def f1(self, k: int) -> float:
        return self.results[k]["f1"]

    def rows(self) -> list[dict]:
        out = []
        for k, r in sorted(self.results.items()):
            c = r["counts"]
            out.append({"method": self.method, "k": k, "f1": r["f1"],
                        "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn})
        return out

    def to_text(self) -> str:
        lines = ["method,k,f1,tp,fp,fn,tn"]
        for r in self.rows():
            lines.append(f"{r['method']},{r['k']},{r['f1']:.6f},{r['tp']},{r['fp']},{r['fn']},{r['tn']}")
        return "\n".join(lines) + "\n"


def evaluate_clustering(embeddings: UserEmbeddings, index: EntityIndex, ks=DEFAULT_KS,
                        seed: int = 0) -> ClusterReport:
    missing = [u for u in embeddings.user_ids if u not in index.user_to_id]
    if missing:
        raise ClusterError(f"users missing from index: {missing[:5]}")
    genres = [index.user_genres(index.user_to_id[u]) for u in embeddings.user_ids]
    A = cosine_affinity(embeddings.vectors)
    report = ClusterReport(embeddings.method)
    for k in ks:
        labels = spectral_cluster(A, k, seed)
        f1, counts = pairwise_genre_f1(labels, genres)
        report.results[k] = {"labels": labels, "f1": f1, "counts": counts}
    return report
