"""Word vocabulary, entity indexes and negative-sampling tables."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ReviewSet

UNK = "<unk>"
MAX_VOCAB = 20000
FORMAT_VERSION = "v1"


class VocabError(ValueError):
    pass


@dataclass
class Vocabulary:
    """Token <-> id map. Id 0 is always the unknown token."""

    id_to_token: list[str]
    counts: list[int]
    unk_id: int = 0
    token_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens) -> np.ndarray:
        get = self.token_to_id.get
        return np.fromiter((get(t, self.unk_id) for t in tokens), dtype=np.int64)

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def word_ids(self) -> np.ndarray:
        """All ids except unk."""
        return np.array([i for i in range(len(self)) if i != self.unk_id], dtype=np.int64)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"vocabulary {len(self)} {self.unk_id} {FORMAT_VERSION}\n")
            for token, count in zip(self.id_to_token, self.counts):
                fh.write(f"{token}\t{count}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise VocabError(f"{path}: empty vocabulary file")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "vocabulary" or head[3] != FORMAT_VERSION:
            raise VocabError(f"{path}: line 1: malformed header {lines[0]!r}")
        size, unk_id = int(head[1]), int(head[2])
        tokens, counts = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if len(parts) != 2:
                raise VocabError(f"{path}: line {lineno}: expected 'token<TAB>count'")
            tokens.append(parts[0])
            counts.append(int(parts[1]))
        if len(tokens) != size:
            raise VocabError(f"{path}: header declares {size} entries, found {len(tokens)}")
        return cls(tokens, counts, unk_id)


def build_vocab(reviews: ReviewSet, max_size: int = MAX_VOCAB) -> Vocabulary:
    """Keep the ``max_size`` most frequent tokens (ties lexicographic) plus unk."""
    counts = Counter(t for r in reviews for t in r.tokens)
    if not counts:
        raise VocabError("cannot build a vocabulary from an empty corpus")
    counts.pop(UNK, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = ranked[:max_size]
    unk_count = sum(c for _, c in ranked[max_size:])
    return Vocabulary([UNK] + [t for t, _ in kept], [unk_count] + [c for _, c in kept])


@dataclass
class EntityIndex:
    user_ids: list[str]
    item_ids: list[str]
    user_vocab: list[np.ndarray]        # per user: word ids, most frequent first
    item_vocab: list[np.ndarray]        # per item: sorted word ids
    user_items: list[np.ndarray]        # per user: sorted item ids
    item_genres: list[frozenset[str]]
    user_to_id: dict[str, int] = field(init=False, repr=False)
    item_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.user_to_id = {u: i for i, u in enumerate(self.user_ids)}
        self.item_to_id = {p: i for i, p in enumerate(self.item_ids)}

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def user_genres(self, user: int) -> frozenset[str]:
        return frozenset().union(*(self.item_genres[p] for p in self.user_items[user]))

    def all_user_genres(self) -> list[frozenset[str]]:
        return [self.user_genres(u) for u in range(self.n_users)]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"entity-index {self.n_users} {self.n_items} {FORMAT_VERSION}\n")
            for p, item in enumerate(self.item_ids):
                genres = ",".join(sorted(self.item_genres[p]))
                words = " ".join(map(str, self.item_vocab[p]))
                fh.write(f"item\t{item}\t{genres}\t{words}\n")
            for u, user in enumerate(self.user_ids):
                items = " ".join(map(str, self.user_items[u]))
                words = " ".join(map(str, self.user_vocab[u]))
                fh.write(f"user\t{user}\t{items}\t{words}\n")

    @classmethod
    def load(cls, path) -> "EntityIndex":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        head = lines[0].split() if lines else []
        if len(head) != 4 or head[0] != "entity-index" or head[3] != FORMAT_VERSION:
            raise VocabError(f"{path}: line 1: malformed header")
        n_users, n_items = int(head[1]), int(head[2])

        def ids(text):
            return np.array([int(x) for x in text.split()], dtype=np.int64)

        items, item_vocab, item_genres = [], [], []
        users, user_items, user_vocab = [], [], []
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if len(parts) != 4 or parts[0] not in ("item", "user"):
                raise VocabError(f"{path}: line {lineno}: malformed record")
            if parts[0] == "item":
                items.append(parts[1])
                item_genres.append(frozenset(g for g in parts[2].split(",") if g))
                item_vocab.append(ids(parts[3]))
            else:
                users.append(parts[1])
                user_items.append(ids(parts[2]))
                user_vocab.append(ids(parts[3]))
        if len(users) != n_users or len(items) != n_items:
            raise VocabError(f"{path}: header counts do not match records")
        return cls(users, items, user_vocab, item_vocab, user_items, item_genres)


def build_entity_index(reviews: ReviewSet, vocab: Vocabulary, n_user_vocab: int = 100) -> EntityIndex:
    """Per-user frequent-word lists, per-item vocabularies and user-item links.

    Users and items are numbered in sorted id order.
    """
    users = reviews.users()
    items = reviews.items()
    user_pos = {u: i for i, u in enumerate(users)}
    item_pos = {p: i for i, p in enumerate(items)}

    user_counts = [Counter() for _ in users]
    item_words = [set() for _ in items]
    user_items = [set() for _ in users]
    item_genres: list[set[str]] = [set() for _ in items]
    for r in reviews:
        u, p = user_pos[r.user_id], item_pos[r.item_id]
        ids = vocab.encode(r.tokens)
        ids = ids[ids != vocab.unk_id]
        user_counts[u].update(ids.tolist())
        item_words[p].update(ids.tolist())
        user_items[u].add(p)
        item_genres[p].update(r.genres)

    tok = vocab.id_to_token
    user_vocab = []
    for counts in user_counts:
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], tok[kv[0]]))
        user_vocab.append(np.array([w for w, _ in ranked[:n_user_vocab]], dtype=np.int64))

    return EntityIndex(
        user_ids=users,
        item_ids=items,
        user_vocab=user_vocab,
        item_vocab=[np.array(sorted(s), dtype=np.int64) for s in item_words],
        user_items=[np.array(sorted(s), dtype=np.int64) for s in user_items],
        item_genres=[frozenset(g) for g in item_genres],
    )


@dataclass
class SamplingTable:
    """Draws ids with probability proportional to ``count ** power``.

    ``ids`` maps table positions to the ids actually returned, so a table can
    cover a subset of a vocabulary (e.g. everything except unk).
    """

    domain: str
    cumulative: np.ndarray
    power: float
    ids: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return np.diff(self.cumulative, prepend=0.0)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        pos = np.searchsorted(self.cumulative, rng.random(size), side="right")
        # guards against u landing exactly on the final 1.0 after rounding
        np.minimum(pos, len(self.ids) - 1, out=pos)
        return self.ids[pos]


def build_sampling_table(counts, power: float = 0.75, domain: str = "word", ids=None) -> SamplingTable:
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        raise VocabError("cannot build a sampling table from empty counts")
    if np.any(counts <= 0):
        raise VocabError("sampling counts must all be positive")
    weights = counts ** power
    cumulative = np.cumsum(weights) / weights.sum()
    cumulative[-1] = 1.0
    ids = np.arange(counts.size, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    if ids.shape != counts.shape:
        raise VocabError("ids and counts must have the same length")
    return SamplingTable(domain, cumulative, power, ids)


def word_sampling_table(vocab: Vocabulary, power: float = 0.75) -> SamplingTable:
    """Unigram^power noise distribution over all words except unk."""
    ids = vocab.word_ids()
    return build_sampling_table([vocab.counts[i] for i in ids], power, "word", ids)


def item_sampling_table(n_items: int) -> SamplingTable:
    return build_sampling_table(np.ones(n_items), 0.0, "item")
