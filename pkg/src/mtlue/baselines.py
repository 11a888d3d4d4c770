"""Reference user-embedding methods: token averaging (word2user) and
user-word-only training (user2vec).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import ReviewSet
from .sgns import EmbeddingTable, TrainConfig
from .vocab import EntityIndex, Vocabulary

METHODS = ("mtl", "word2user", "user2vec", "random")


@dataclass
class UserEmbeddings:
    method: str
    user_ids: list[str]
    vectors: np.ndarray
    stats: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if len(self.user_ids) != len(self.vectors):
            raise ValueError("one vector per user required")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("user vectors must be finite")
        self._pos = {u: i for i, u in enumerate(self.user_ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __getitem__(self, user_id: str) -> np.ndarray:
        return self.vectors[self._pos[user_id]]

    def __contains__(self, user_id: str) -> bool:
        return user_id in self._pos

    def as_dict(self) -> dict[str, np.ndarray]:
        return {u: self.vectors[i] for i, u in enumerate(self.user_ids)}

    @classmethod
    def from_table(cls, method: str, table: EmbeddingTable, index: EntityIndex) -> "UserEmbeddings":
        return cls(method, list(index.user_ids), table.vectors.copy())


def word2user(reviews: ReviewSet, vocab: Vocabulary, word_vectors) -> UserEmbeddings:
    """Mean of the word vectors of every token occurrence a user wrote (unk included)."""
    W = word_vectors.vectors if isinstance(word_vectors, EmbeddingTable) else np.asarray(word_vectors)
    users = reviews.users()
    pos = {u: i for i, u in enumerate(users)}
    sums = np.zeros((len(users), W.shape[1]))
    counts = np.zeros(len(users))
    for r in reviews:
        ids = vocab.encode(r.tokens)
        u = pos[r.user_id]
        sums[u] += W[ids].sum(axis=0)
        counts[u] += len(ids)
    if np.any(counts == 0):
        empty = users[int(np.flatnonzero(counts == 0)[0])]
        raise ValueError(f"user {empty!r} authored no tokens")
    return UserEmbeddings("word2user", users, sums / counts[:, None])


def train_word_vectors(reviews: ReviewSet, vocab: Vocabulary, index: EntityIndex,
                       config: TrainConfig, progress=None) -> EmbeddingTable:
    """Word-word-only skip-gram training, the in-repo stand-in for word2vec."""
    from .trainer import train

    return train(reviews, vocab, index, replace(config, tasks=("word_word",)), progress).word


def train_user2vec(reviews: ReviewSet, vocab: Vocabulary, index: EntityIndex,
                   config: TrainConfig, progress=None) -> UserEmbeddings:
    """User-word task alone, positives restricted to the document's own tokens."""
    from .trainer import train

    cfg = replace(config, tasks=("user_word",), user_vocab_positives=False)
    result = train(reviews, vocab, index, cfg, progress)
    return UserEmbeddings("user2vec", list(index.user_ids), result.user.vectors.copy(), result.stats)


def random_embeddings(user_ids, dim: int, seed: int = 0) -> UserEmbeddings:
    """Isotropic Gaussian vectors: the chance-level reference for clustering."""
    rng = np.random.default_rng(seed)
    return UserEmbeddings("random", list(user_ids), rng.standard_normal((len(user_ids), dim)))
