"""End-to-end recipes shared by the command line, the demos and the tests.

The presets are desk-scale settings for the small synthetic corpora; the
library defaults (``TrainConfig()``) keep the full-scale values.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb

import numpy as np

from .baselines import UserEmbeddings, random_embeddings, train_user2vec, train_word_vectors, word2user
from .classify import ClassifyReport, LogRegConfig, evaluate, fit_tfidf, oversample, personalize, train_logreg
from .corpus import ReviewSet, SplitSpec, generate_synthetic, preprocess, split
from .sgns import TrainConfig
from .trainer import TrainResult, train
from .vocab import EntityIndex, Vocabulary, build_entity_index, build_vocab

# 1e-5 barely moves a 1,000-document corpus in 5 epochs
DESK_CONFIG = TrainConfig(dim=300, learning_rate=3e-5, seed=42)
# user rows need larger steps before they pick up the writing-style signal
PERSONALIZE_CONFIG = TrainConfig(dim=100, learning_rate=3e-4)
PERSONALIZE_FIXTURE = dict(
    n_users=100, docs_per_user=10, sentiment_rate=0.05, sentiment_fidelity=0.6,
    bias_strength=0.85, style_rate=0.06,
)
EMBEDDING_METHODS = ("mtl", "word2user", "user2vec", "random")


def default_fixture(seed: int = 42) -> ReviewSet:
    return preprocess(generate_synthetic(seed=seed))


def personalization_fixture(seed: int) -> ReviewSet:
    return preprocess(generate_synthetic(seed=seed, **PERSONALIZE_FIXTURE))


@dataclass
class Model:
    vocab: Vocabulary
    index: EntityIndex
    result: TrainResult

    def users(self, method: str = "mtl") -> UserEmbeddings:
        return UserEmbeddings.from_table(method, self.result.user, self.index)


def fit_model(reviews: ReviewSet, config: TrainConfig = DESK_CONFIG, progress=None) -> Model:
    vocab = build_vocab(reviews)
    index = build_entity_index(reviews, vocab, config.n_user_vocab)
    return Model(vocab, index, train(reviews, vocab, index, config, progress))


def user_embeddings(method: str, reviews: ReviewSet, config: TrainConfig = DESK_CONFIG,
                    progress=None) -> tuple[UserEmbeddings, EntityIndex]:
    """User vectors by any supported method, plus the index they refer to."""
    if method not in EMBEDDING_METHODS:
        raise ValueError(f"unknown embedding method {method!r}; choose from {EMBEDDING_METHODS}")
    vocab = build_vocab(reviews)
    index = build_entity_index(reviews, vocab, config.n_user_vocab)
    if method == "mtl":
        res = train(reviews, vocab, index, config, progress)
        return UserEmbeddings.from_table("mtl", res.user, index), index
    if method == "user2vec":
        return train_user2vec(reviews, vocab, index, config, progress), index
    if method == "word2user":
        words = train_word_vectors(reviews, vocab, index, config, progress)
        return word2user(reviews, vocab, words.vectors), index
    return random_embeddings(index.user_ids, config.dim, config.seed), index


def chance_f1(group_sizes, k: int) -> float:
    """Expected pairwise F1 of a clustering that ignores the data.

    Gold pairs are those inside one planted group (``group_sizes``); a random
    balanced partition into ``k`` clusters puts a pair together with
    probability ``(n/k - 1) / (n - 1)`` independently of gold, so precision
    is the gold rate and recall is that probability.
    """
    n = int(sum(group_sizes))
    gold_rate = sum(comb(int(s), 2) for s in group_sizes) / comb(n, 2)
    same = (n / k - 1) / (n - 1)
    return 2 * gold_rate * same / (gold_rate + same)


@dataclass
class ClassifyOutcome:
    plain: ClassifyReport
    personalized: ClassifyReport | None


def classify_experiment(reviews: ReviewSet, seed: int = 0, config: TrainConfig = PERSONALIZE_CONFIG,
                        embeddings: UserEmbeddings | None = None, personalized: bool = True,
                        ratios=(0.8, 0.1, 0.1), max_features: int = 15000,
                        logreg: LogRegConfig | None = None, average: str = "weighted") -> ClassifyOutcome:
    """Sentiment classification on a seeded split, with and without user vectors.

    Without ``embeddings``, MTL vectors are trained on the training split only
    so the test labels never leak into the user representation.
    """
    train_set, _, test_set = split(reviews, SplitSpec(tuple(ratios), seed))
    tfidf = fit_tfidf([r.tokens for r in train_set], max_features=max_features)
    X = tfidf.transform([r.tokens for r in train_set])
    y = np.array([r.sentiment for r in train_set], dtype=object)
    Xt = tfidf.transform([r.tokens for r in test_set])
    yt = [r.sentiment for r in test_set]

    def fit_eval(X_train, X_test, method):
        Xo, yo = oversample(X_train, y, seed)
        rep = evaluate(train_logreg(Xo, yo, logreg), X_test, yt, average)
        rep.method = method
        return rep

    plain = fit_eval(X, Xt, "lr")
    if not personalized:
        return ClassifyOutcome(plain, None)
    if embeddings is None:
        embeddings = fit_model(train_set, replace(config, seed=seed)).users()
    pers = fit_eval(personalize(X, [r.user_id for r in train_set], embeddings),
                    personalize(Xt, [r.user_id for r in test_set], embeddings), f"lr+{embeddings.method}")
    return ClassifyOutcome(plain, pers)
