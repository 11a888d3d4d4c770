"""Review corpora: ingestion, normalization, anonymization, splitting and a
seeded synthetic generator with planted genre structure.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DATASET_KINDS = ("amazon", "imdb", "yelp", "synthetic")
SENTIMENTS = ("positive", "negative", "neutral")
MIN_TOKENS = 10
MAX_GENRES = 4
REQUIRED_FIELDS = ("doc_id", "user_id", "item_id", "rating", "text", "genres")

# (low, high) inclusive rating scale per dataset kind
RATING_SCALES = {
    "amazon": (1.0, 5.0),
    "yelp": (1.0, 5.0),
    "synthetic": (1.0, 5.0),
    "imdb": (1.0, 10.0),
}

_TOKEN_RE = re.compile(r"[^\W_]+|(?:[^\w\s]|_)+")


class CorpusError(ValueError):
    """Fatal problem with a corpus as a whole."""


class RecordError(CorpusError):
    """A single malformed record; carries its line number when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Review:
    doc_id: str
    user_id: str
    item_id: str
    rating: float
    tokens: tuple[str, ...]
    genres: frozenset[str]
    sentiment: str | None = None


@dataclass(frozen=True)
class ReviewSet:
    reviews: tuple[Review, ...]
    dataset_kind: str
    retained_genres: tuple[str, ...] = ()
    # free-form metadata, e.g. planted parameters of a synthetic corpus
    meta: dict = field(default_factory=dict, compare=False)
    n_skipped: int = 0

    def __post_init__(self):
        if self.dataset_kind not in DATASET_KINDS:
            raise CorpusError(f"unknown dataset kind {self.dataset_kind!r}")

    def __len__(self) -> int:
        return len(self.reviews)

    def __iter__(self):
        return iter(self.reviews)

    def users(self) -> list[str]:
        return sorted({r.user_id for r in self.reviews})

    def items(self) -> list[str]:
        return sorted({r.item_id for r in self.reviews})

    def subset(self, reviews: Iterable[Review]) -> "ReviewSet":
        return replace(self, reviews=tuple(reviews), n_skipped=0)


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise CorpusError(f"split ratios must be three positive numbers, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise CorpusError(f"split ratios must sum to 1, got {sum(self.ratios)}")


def tokenize(text: str) -> list[str]:
    """Split into maximal letter/digit runs; punctuation runs become their own tokens.

    >>> tokenize("Great food!! 10/10")
    ['Great', 'food', '!!', '10', '/', '10']
    """
    return _TOKEN_RE.findall(text)


def sentiment_of(rating: float, dataset_kind: str) -> str:
    if dataset_kind == "imdb":
        if rating > 6:
            return "positive"
        if rating < 5:
            return "negative"
        return "neutral"
    if rating > 3:
        return "positive"
    if rating < 3:
        return "negative"
    return "neutral"


def _parse_record(obj, line: int) -> Review:
    if not isinstance(obj, dict):
        raise RecordError("record is not an object", line)
    for name in REQUIRED_FIELDS:
        if name not in obj:
            raise RecordError(f"missing field {name!r}", line, name)
    rating = obj["rating"]
    if isinstance(rating, bool) or not isinstance(rating, (int, float)):
        raise RecordError("field 'rating' is not a number", line, "rating")
    genres = obj["genres"]
    if not isinstance(genres, list) or not all(isinstance(g, str) for g in genres):
        raise RecordError("field 'genres' is not a list of strings", line, "genres")
    for name in ("doc_id", "user_id", "item_id", "text"):
        if not isinstance(obj[name], str):
            raise RecordError(f"field {name!r} is not a string", line, name)
    tokens = obj.get("tokens")
    if tokens is None:
        tokens = tokenize(obj["text"])
    elif not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise RecordError("field 'tokens' is not a list of strings", line, "tokens")
    return Review(
        doc_id=obj["doc_id"],
        user_id=obj["user_id"],
        item_id=obj["item_id"],
        rating=float(rating),
        tokens=tuple(tokens),
        genres=frozenset(genres),
        sentiment=obj.get("sentiment"),
    )


def load_reviews(path, dataset_kind: str, strict: bool = True) -> ReviewSet:
    """Read newline-delimited JSON review records.

    Records that already carry a ``tokens`` list (files written by
    :func:`save_reviews`) keep those tokens; otherwise ``text`` is tokenized.
    In lenient mode malformed records are skipped and counted in
    ``ReviewSet.n_skipped``.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc

    reviews = []
    skipped = 0
    seen = set()
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid JSON ({exc.msg})", lineno) from None
            review = _parse_record(obj, lineno)
            if review.doc_id in seen:
                raise RecordError(f"duplicate doc_id {review.doc_id!r}", lineno, "doc_id")
        except RecordError:
            if strict:
                raise
            skipped += 1
            continue
        seen.add(review.doc_id)
        reviews.append(review)
    return ReviewSet(tuple(reviews), dataset_kind, n_skipped=skipped)


def review_to_record(review: Review) -> dict:
    return {
        "doc_id": review.doc_id,
        "user_id": review.user_id,
        "item_id": review.item_id,
        "rating": review.rating,
        "text": " ".join(review.tokens),
        "genres": sorted(review.genres),
        "sentiment": review.sentiment,
        "tokens": list(review.tokens),
    }


def save_reviews(reviews: ReviewSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for review in reviews:
            fh.write(json.dumps(review_to_record(review), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def _top_genres(reviews: Sequence[Review], limit: int = MAX_GENRES) -> tuple[str, ...]:
    counts = Counter(g for r in reviews for g in r.genres)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(g for g, _ in ranked[:limit])


def preprocess(raw: ReviewSet) -> ReviewSet:
    """Lowercase, drop short documents, keep the four most frequent genres and
    assign sentiment labels from ratings.
    """
    low, high = RATING_SCALES[raw.dataset_kind]
    kept = []
    for review in raw:
        if not low <= review.rating <= high:
            raise RecordError(
                f"doc {review.doc_id!r}: rating {review.rating} outside [{low:g}, {high:g}]",
                field="rating",
            )
        tokens = tuple(t.lower() for t in review.tokens)
        if len(tokens) < MIN_TOKENS:
            continue
        kept.append(replace(review, tokens=tokens))

    retained = _top_genres(kept)
    retained_set = set(retained)
    out = []
    for review in kept:
        genres = review.genres & retained_set
        if not genres:
            continue
        out.append(
            replace(review, genres=frozenset(genres),
                    sentiment=sentiment_of(review.rating, raw.dataset_kind))
        )
    return replace(raw, reviews=tuple(out), retained_genres=retained, n_skipped=0)


def _digest(salt: str, namespace: str, value: str) -> str:
    return hashlib.sha256(f"{salt}\x00{namespace}\x00{value}".encode("utf-8")).hexdigest()


def anonymize(reviews: ReviewSet, salt: str) -> ReviewSet:
    """Replace user, item and document ids with salted SHA-256 hex digests."""
    if not salt:
        raise CorpusError("anonymization salt must be non-empty")

    maps: dict[str, dict[str, str]] = {"user": {}, "item": {}, "doc": {}}
    for review in reviews:
        for ns, value in (("user", review.user_id), ("item", review.item_id), ("doc", review.doc_id)):
            if value not in maps[ns]:
                maps[ns][value] = _digest(salt, ns, value)

    for ns, mapping in maps.items():
        inverse: dict[str, str] = {}
        for original, hashed in mapping.items():
            if hashed in inverse:
                raise CorpusError(
                    f"{ns} id digest collision: {inverse[hashed]!r} and {original!r}"
                )
            inverse[hashed] = original

    out = tuple(
        replace(r, user_id=maps["user"][r.user_id], item_id=maps["item"][r.item_id],
                doc_id=maps["doc"][r.doc_id])
        for r in reviews
    )
    meta = dict(reviews.meta)
    # planted per-user parameters must follow the renamed users
    for key in ("user_genre", "user_bias"):
        if key in meta:
            meta[key] = {maps["user"].get(u, u): v for u, v in meta[key].items()}
    return replace(reviews, reviews=out, meta=meta)


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    dev = math.floor(n * ratios[1] + 1e-9)
    test = math.floor(n * ratios[2] + 1e-9)
    return n - dev - test, dev, test


def split(reviews: ReviewSet, spec: SplitSpec) -> tuple[ReviewSet, ReviewSet, ReviewSet]:
    """Seeded shuffle then floor allocation of dev/test; the remainder goes to train."""
    n = len(reviews)
    if n < 10:
        raise CorpusError(f"need at least 10 reviews to split, got {n}")
    n_train, n_dev, n_test = split_sizes(n, spec.ratios)
    if n_dev == 0 or n_test == 0:
        raise CorpusError(f"ratios {spec.ratios} leave an empty dev or test split for n={n}")
    order = np.random.default_rng(spec.seed).permutation(n)
    docs = reviews.reviews
    parts = (order[:n_train], order[n_train:n_train + n_dev], order[n_train + n_dev:])
    return tuple(reviews.subset(docs[i] for i in part) for part in parts)


def generate_synthetic(
    n_users: int = 200,
    n_items: int = 40,
    n_genres: int = 4,
    docs_per_user: int = 5,
    vocab_per_genre: int = 60,
    noise_rate: float = 0.05,
    seed: int = 42,
    *,
    doc_length: tuple[int, int] = (20, 30),
    shared_vocab: int = 40,
    shared_rate: float = 0.3,
    sentiment_words: int = 6,
    sentiment_rate: float = 0.1,
    sentiment_fidelity: float = 0.75,
    bias_strength: float = 0.8,
    style_words: int = 10,
    style_rate: float = 0.0,
) -> ReviewSet:
    """Seeded corpus with planted genre and per-user sentiment structure.

    Users are assigned a dominant genre round-robin and items likewise. Each
    review picks an item of the author's genre with probability
    ``1 - noise_rate`` and a uniformly random item otherwise. Tokens come from
    the item genre's vocabulary, a shared vocabulary (``shared_rate``) and
    sentiment words (``sentiment_rate``). Each genre owns its own sentiment
    words; with probability ``sentiment_fidelity`` a sentiment word matches
    the review's label, otherwise its polarity is random.

    Every user carries a sentiment bias ``+1`` or ``-1`` (alternating within a
    genre). A review's label is the user's leaning with probability
    ``bias_strength``; the rest is split between neutral and the opposite
    polarity. With ``style_rate > 0`` users also sprinkle words from a style
    vocabulary tied to their bias (one per bias sign, shared across genres),
    so a user's leaning shows in their writing across documents rather than
    in any single one. Planted genres and biases are returned in ``meta``.
    """
    if min(n_users, n_items, n_genres, docs_per_user, vocab_per_genre) < 1:
        raise CorpusError("all counts must be at least 1")
    if n_genres > MAX_GENRES:
        raise CorpusError(f"n_genres must be at most {MAX_GENRES}")
    if n_items < n_genres:
        raise CorpusError("need at least one item per genre")
    if not 0.0 <= noise_rate <= 1.0:
        raise CorpusError("noise_rate must lie in [0, 1]")
    lo, hi = doc_length
    if lo < MIN_TOKENS or hi < lo:
        raise CorpusError(f"doc_length {doc_length} cannot yield {MIN_TOKENS}+ token documents")
    if style_rate > 0 and style_words < 1:
        raise CorpusError("style_rate > 0 needs a non-empty style vocabulary")
    if sentiment_rate + shared_rate + style_rate > 1:
        raise CorpusError("sentiment_rate + shared_rate + style_rate must not exceed 1")
    if shared_vocab < 1 and shared_rate > 0:
        raise CorpusError("shared_rate > 0 needs a non-empty shared vocabulary")

    rng = np.random.default_rng(seed)
    genre_names = [f"genre{g}" for g in range(n_genres)]
    genre_vocab = [[f"g{g}w{j}" for j in range(vocab_per_genre)] for g in range(n_genres)]
    shared = [f"s{j}" for j in range(shared_vocab)]
    style = {1: [f"up{j}" for j in range(style_words)], -1: [f"down{j}" for j in range(style_words)]}
    polar = {
        (g, pol): [f"g{g}{pol}{j}" for j in range(sentiment_words)]
        for g in range(n_genres) for pol in ("pos", "neg", "neu")
    }

    item_genre = [i % n_genres for i in range(n_items)]
    items_of = [[i for i in range(n_items) if item_genre[i] == g] for g in range(n_genres)]
    user_genre = [u % n_genres for u in range(n_users)]
    user_bias = [1 if (u // n_genres) % 2 == 0 else -1 for u in range(n_users)]

    # Zipf-like weights so word frequencies are not flat
    zipf = 1.0 / np.arange(1, vocab_per_genre + 1) ** 0.5
    zipf /= zipf.sum()

    reviews = []
    for u in range(n_users):
        lean = "positive" if user_bias[u] > 0 else "negative"
        other = "negative" if user_bias[u] > 0 else "positive"
        for d in range(docs_per_user):
            if rng.random() < noise_rate:
                item = int(rng.integers(n_items))
            else:
                pool = items_of[user_genre[u]]
                item = pool[int(rng.integers(len(pool)))]
            g = item_genre[item]

            r = rng.random()
            if r < bias_strength:
                label = lean
            elif r < bias_strength + (1 - bias_strength) / 2:
                label = "neutral"
            else:
                label = other
            if label == "positive":
                rating = float(rng.choice([4, 5]))
            elif label == "negative":
                rating = float(rng.choice([1, 2]))
            else:
                rating = 3.0

            length = int(rng.integers(lo, hi + 1))
            tokens = []
            for _ in range(length):
                x = rng.random()
                if x < sentiment_rate:
                    if rng.random() < sentiment_fidelity:
                        pol = label[:3]
                    else:
                        pol = ("pos", "neg", "neu")[int(rng.integers(3))]
                    words = polar[(g, pol)]
                    tokens.append(words[int(rng.integers(len(words)))])
                elif x < sentiment_rate + shared_rate:
                    tokens.append(shared[int(rng.integers(len(shared)))])
                elif x < sentiment_rate + shared_rate + style_rate:
                    words = style[user_bias[u]]
                    tokens.append(words[int(rng.integers(len(words)))])
                else:
                    tokens.append(genre_vocab[g][int(rng.choice(vocab_per_genre, p=zipf))])

            reviews.append(Review(
                doc_id=f"d{u}_{d}",
                user_id=f"u{u}",
                item_id=f"i{item}",
                rating=rating,
                tokens=tuple(tokens),
                genres=frozenset([genre_names[g]]),
                sentiment=label,
            ))

    meta = {
        "user_genre": {f"u{u}": genre_names[user_genre[u]] for u in range(n_users)},
        "user_bias": {f"u{u}": user_bias[u] for u in range(n_users)},
        "item_genre": {f"i{i}": genre_names[item_genre[i]] for i in range(n_items)},
        "params": {
            "n_users": n_users, "n_items": n_items, "n_genres": n_genres,
            "docs_per_user": docs_per_user, "vocab_per_genre": vocab_per_genre,
            "noise_rate": noise_rate, "seed": seed,
        },
    }
    return ReviewSet(tuple(reviews), "synthetic", tuple(genre_names), meta=meta)
