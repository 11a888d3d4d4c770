"""Pair generation for the four joint tasks and the joint training loop.

Tasks: word-word (skip-gram context), user-word (authorship), item-word
(item description) and user-item (who reviewed what). Each positive pair is
accompanied by ``config.negatives`` negatives and scored with binary
cross-entropy on the sigmoid of a dot product.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .corpus import ReviewSet
from .sgns import (
    EmbeddingTable,
    TrainConfig,
    TrainingPair,
    init_model,
    train_pair_batch,
)
from .vocab import EntityIndex, SamplingTable, Vocabulary, item_sampling_table, word_sampling_table

log = logging.getLogger(__name__)

TASKS = {
    "word_word": ("word", "word"),
    "user_word": ("user", "word"),
    "item_word": ("item", "word"),
    "user_item": ("user", "item"),
}
MAX_RESAMPLE = 100


class SamplingError(RuntimeError):
    pass


@dataclass
class PairBatch:
    """Pairs of one task stored column-wise; iterating yields TrainingPair."""

    task: str
    anchors: np.ndarray
    targets: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[TrainingPair]:
        ak, tk = TASKS[self.task]
        for a, t, y in zip(self.anchors.tolist(), self.targets.tolist(), self.labels.tolist()):
            yield TrainingPair((ak, a), (tk, t), y)

    @property
    def positives(self) -> "PairBatch":
        m = self.labels == 1
        return PairBatch(self.task, self.anchors[m], self.targets[m], self.labels[m])

    @property
    def negatives(self) -> "PairBatch":
        m = self.labels == 0
        return PairBatch(self.task, self.anchors[m], self.targets[m], self.labels[m])


def _batch(task, pos_anchor, pos_target, neg_anchor, neg_target) -> PairBatch:
    """Lay out each positive followed by its own negatives."""
    n = len(pos_anchor)
    k = len(neg_anchor) // n if n else 0

    def weave(pos, neg):
        return np.column_stack([np.asarray(pos, np.int64), np.asarray(neg, np.int64).reshape(n, k)]).ravel()

    labels = np.zeros((n, k + 1), np.int64)
    labels[:, 0] = 1
    return PairBatch(task, weave(pos_anchor, neg_anchor), weave(pos_target, neg_target), labels.ravel())


def _draw_rejecting(draw: Callable[[int], np.ndarray], reject: Callable[[np.ndarray, np.ndarray], np.ndarray],
                    n: int, what: str) -> np.ndarray:
    """Draw ``n`` values, redrawing positions where ``reject(values, positions)`` holds."""
    out = draw(n)
    pending = np.flatnonzero(reject(out, np.arange(n)))
    for _ in range(MAX_RESAMPLE):
        if len(pending) == 0:
            return out
        out[pending] = draw(len(pending))
        pending = pending[reject(out[pending], pending)]
    if len(pending) == 0:
        return out
    raise SamplingError(f"{what}: no admissible negative after {MAX_RESAMPLE} attempts")


def pairs_word_word(doc: np.ndarray, config: TrainConfig, word_table: SamplingTable,
                    rng: np.random.Generator, unk_id: int | None = None) -> PairBatch:
    """Every (w_i, w_j) with 0 < |i - j| <= window, plus negatives per positive.

    Pairs touching ``unk_id`` are skipped.
    """
    doc = np.asarray(doc, dtype=np.int64)
    L = len(doc)
    left, right = [], []
    for off in range(1, min(config.window, L - 1) + 1):
        i = np.arange(L - off)
        left.append(i)
        right.append(i + off)
    if left:
        i = np.concatenate(left)
        j = np.concatenate(right)
        anchors = doc[np.concatenate([i, j])]
        targets = doc[np.concatenate([j, i])]
    else:
        anchors = targets = np.empty(0, np.int64)
    if unk_id is not None:
        keep = (anchors != unk_id) & (targets != unk_id)
        anchors, targets = anchors[keep], targets[keep]

    k = config.negatives
    neg_anchor = np.repeat(anchors, k)
    true_target = np.repeat(targets, k)
    neg_target = _draw_rejecting(
        lambda n: word_table.sample(rng, n),
        lambda vals, pos: vals == true_target[pos],
        len(neg_anchor), "word_word",
    )
    return _batch("word_word", anchors, targets, neg_anchor, neg_target)


def _entity_word_pairs(task, anchor, doc, profile, config, word_table, rng, n_positives,
                       extend, unk_id) -> PairBatch:
    doc = np.asarray(doc, dtype=np.int64)
    if unk_id is not None:
        doc = doc[doc != unk_id]
    if extend:
        pool = np.concatenate([doc, profile])
        if n_positives is None:
            targets = pool
        else:
            targets = pool[rng.integers(len(pool), size=n_positives)] if len(pool) else pool[:0]
        excluded = np.union1d(profile, doc)
        reject = lambda vals, pos: np.isin(vals, excluded)  # noqa: E731
    else:
        targets = doc
        reject = None
    anchors = np.full(len(targets), anchor, dtype=np.int64)

    k = config.negatives
    neg_anchor = np.repeat(anchors, k)
    if reject is None:
        true_target = np.repeat(targets, k)
        reject = lambda vals, pos: vals == true_target[pos]  # noqa: E731
    neg_target = _draw_rejecting(lambda n: word_table.sample(rng, n), reject, len(neg_anchor), task)
    return _batch(task, anchors, targets, neg_anchor, neg_target)


def pairs_user_word(doc, user: int, index: EntityIndex, config: TrainConfig,
                    word_table: SamplingTable, rng: np.random.Generator,
                    n_positives: int | None = None, unk_id: int | None = None) -> PairBatch:
    """Authorship pairs for ``user``.

    Positive words come from the document tokens combined with the user's
    frequent-word list: the whole combined list when ``n_positives`` is None,
    otherwise ``n_positives`` uniform draws from it. Negatives are redrawn
    while they fall inside that combined list. With
    ``config.user_vocab_positives`` off (user2vec), positives are the document
    tokens alone and a negative is only rejected when it equals its positive.
    """
    return _entity_word_pairs("user_word", user, doc, index.user_vocab[user], config, word_table,
                              rng, n_positives, config.user_vocab_positives, unk_id)


def pairs_item_word(doc, item: int, index: EntityIndex, config: TrainConfig,
                    word_table: SamplingTable, rng: np.random.Generator,
                    n_positives: int | None = None, unk_id: int | None = None) -> PairBatch:
    """Item-description pairs; the item's review vocabulary plays the user-vocabulary role."""
    return _entity_word_pairs("item_word", item, doc, index.item_vocab[item], config, word_table,
                              rng, n_positives, True, unk_id)


def pairs_user_item(user: int, item: int, index: EntityIndex, config: TrainConfig,
                    rng: np.random.Generator, item_table: SamplingTable | None = None) -> PairBatch:
    reviewed = index.user_items[user]
    if len(reviewed) >= index.n_items:
        raise SamplingError(f"user {index.user_ids[user]!r} has reviewed every item; no negatives exist")
    table = item_table or item_sampling_table(index.n_items)
    k = config.negatives
    neg = _draw_rejecting(lambda n: table.sample(rng, n),
                          lambda vals, pos: np.isin(vals, reviewed), k, "user_item")
    return _batch("user_item", np.array([user]), np.array([item]), np.full(k, user), neg)


@dataclass
class TrainStats:
    # one {task: {"loss": mean loss, "pairs": count}} mapping per epoch
    epochs: list[dict[str, dict[str, float]]] = field(default_factory=list)

    def total(self, epoch: int) -> float:
        return sum(v["loss"] for v in self.epochs[epoch].values())

    def records(self) -> list[dict]:
        rows = []
        for e, tasks in enumerate(self.epochs, start=1):
            for task, v in tasks.items():
                rows.append({"epoch": e, "task": task, "mean_loss": v["loss"], "pairs": int(v["pairs"])})
        return rows


class TrainResult(NamedTuple):
    word: EmbeddingTable
    user: EmbeddingTable
    item: EmbeddingTable
    stats: TrainStats


def encode_corpus(reviews: ReviewSet, vocab: Vocabulary, index: EntityIndex):
    return [
        (vocab.encode(r.tokens), index.user_to_id[r.user_id], index.item_to_id[r.item_id])
        for r in reviews
    ]


def train(reviews: ReviewSet, vocab: Vocabulary, index: EntityIndex, config: TrainConfig,
          progress: Callable[[dict], None] | None = None) -> TrainResult:
    """Jointly train word, user and item tables.

    Documents are visited in a seeded random order. For each document the
    pairs of every enabled task are generated and then applied one at a time:
    BCE gradient, then a lazy Adam step on the two rows involved.
    """
    unknown = set(config.tasks) - set(TASKS)
    if unknown:
        raise ValueError(f"unknown tasks {sorted(unknown)}")
    if len(reviews) == 0:
        raise ValueError("cannot train on an empty corpus")

    docs = encode_corpus(reviews, vocab, index)
    tables = dict(zip(("word", "user", "item"), init_model(len(vocab), index.n_users, index.n_items, config)))
    word_table = word_sampling_table(vocab, config.word_power)
    item_table = item_sampling_table(index.n_items)
    rng = np.random.default_rng([config.seed, 1])
    stats = TrainStats()
    unk = vocab.unk_id

    for epoch in range(config.epochs):
        loss_sum = {t: 0.0 for t in config.tasks}
        count = {t: 0 for t in config.tasks}
        for d in rng.permutation(len(docs)):
            ids, user, item = docs[d]
            n_tok = int(np.count_nonzero(ids != unk))
            batches = []
            for task in config.tasks:
                if task == "word_word":
                    b = pairs_word_word(ids, config, word_table, rng, unk_id=unk)
                elif task == "user_word":
                    b = pairs_user_word(ids, user, index, config, word_table, rng,
                                        n_positives=n_tok if config.user_vocab_positives else None,
                                        unk_id=unk)
                elif task == "item_word":
                    b = pairs_item_word(ids, item, index, config, word_table, rng, n_positives=n_tok, unk_id=unk)
                else:
                    b = pairs_user_item(user, item, index, config, rng, item_table)
                batches.append(b)

            for b in batches:
                ak, tk = TASKS[b.task]
                losses = train_pair_batch(tables[ak], tables[tk], b.anchors, b.targets, b.labels, config)
                loss_sum[b.task] += float(losses.sum())
                count[b.task] += len(b)

        summary = {t: {"loss": loss_sum[t] / count[t] if count[t] else 0.0, "pairs": count[t]}
                   for t in config.tasks}
        stats.epochs.append(summary)
        for t, v in summary.items():
            record = {"epoch": epoch + 1, "task": t, "mean_loss": v["loss"], "pairs": v["pairs"]}
            log.debug("epoch %d %s loss=%.6f pairs=%d", epoch + 1, t, v["loss"], v["pairs"])
            if progress is not None:
                progress(record)

    return TrainResult(tables["word"], tables["user"], tables["item"], stats)
