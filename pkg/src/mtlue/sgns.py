"""Skip-gram negative-sampling numerics: scores, BCE loss, gradients and
lazy per-row Adam over embedding tables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from . import _kernels

LOG_FLOOR = 1e-12
KINDS = ("word", "user", "item")


class NumericError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 300
    learning_rate: float = 1e-5
    epochs: int = 5
    negatives: int = 5
    window: int = 5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init_scale: float | None = None     # None -> 0.5 / dim
    seed: int = 0
    n_user_vocab: int = 100
    word_power: float = 0.75
    tasks: tuple[str, ...] = ("word_word", "user_word", "item_word", "user_item")
    # False reproduces user2vec: user-word positives come from the document only
    user_vocab_positives: bool = True
    # >1 enables lock-free parallel pair updates (nondeterministic)
    threads: int = 1

    def __post_init__(self):
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.dim < 1 or self.window < 1 or self.epochs < 0 or self.threads < 1:
            raise ValueError("dim, window and threads must be >= 1, epochs >= 0")

    @property
    def scale(self) -> float:
        return 0.5 / self.dim if self.init_scale is None else self.init_scale


class TrainingPair(NamedTuple):
    anchor: tuple[str, int]
    target: tuple[str, int]
    label: int


@dataclass
class EmbeddingTable:
    kind: str
    vectors: np.ndarray
    adam_m: np.ndarray = field(default=None, repr=False)
    adam_v: np.ndarray = field(default=None, repr=False)
    adam_t: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown table kind {self.kind!r}")
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.adam_m is None:
            self.adam_m = np.zeros_like(self.vectors)
        if self.adam_v is None:
            self.adam_v = np.zeros_like(self.vectors)
        if self.adam_t is None:
            self.adam_t = np.zeros(len(self.vectors), dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.vectors)

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.kind, self.vectors.copy(), self.adam_m.copy(),
                              self.adam_v.copy(), self.adam_t.copy())


def sigmoid(x):
    return expit(x)


def score(a, t) -> float:
    a = np.asarray(a, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if a.shape != t.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {t.shape}")
    return float(expit(a @ t))


def _bce(s, y):
    p = expit(s)
    loss = -(y * np.log(np.maximum(p, LOG_FLOOR)) + (1 - y) * np.log(np.maximum(1 - p, LOG_FLOOR)))
    return loss, p - y


def loss_and_grad(a, t, label: int):
    """Binary cross-entropy of sigmoid(a.t) against ``label`` and its gradients.

    Returns ``(loss, grad_a, grad_t)``.
    """
    a = np.asarray(a, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if a.shape != t.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {t.shape}")
    s = a @ t
    loss, coef = _bce(s, label)
    if not (np.isfinite(s) and np.isfinite(loss) and np.isfinite(coef)):
        raise NumericError(f"non-finite loss for pair with score {s!r}, label {label}")
    return float(loss), coef * t, coef * a


def batch_loss_and_grad(A: np.ndarray, T: np.ndarray, labels: np.ndarray):
    """Row-wise version of :func:`loss_and_grad` for stacked pairs."""
    s = np.einsum("ij,ij->i", A, T)
    loss, coef = _bce(s, labels)
    finite = np.isfinite(s) & np.isfinite(loss)
    if not np.all(finite):
        bad = int(np.flatnonzero(~finite)[0])
        raise NumericError(f"non-finite loss at pair {bad} (score {s[bad]!r})")
    return loss, coef[:, None] * T, coef[:, None] * A


def adam_update(table: EmbeddingTable, row: int, grad, config: TrainConfig) -> np.ndarray:
    """One lazy Adam step on a single row; other rows are untouched."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != (table.dim,):
        raise ValueError(f"gradient shape {grad.shape} does not match dim {table.dim}")
    adam_update_rows(table, np.array([row]), grad[None, :], config)
    return table.vectors[row]


def adam_update_rows(table: EmbeddingTable, rows: np.ndarray, grads: np.ndarray,
                     config: TrainConfig) -> None:
    """Lazy Adam on distinct ``rows`` with matching gradient rows."""
    b1, b2 = config.adam_beta1, config.adam_beta2
    table.adam_t[rows] += 1
    t = table.adam_t[rows][:, None]
    m = b1 * table.adam_m[rows] + (1 - b1) * grads
    v = b2 * table.adam_v[rows] + (1 - b2) * grads * grads
    table.adam_m[rows] = m
    table.adam_v[rows] = v
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    table.vectors[rows] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)


def train_pair_batch(anchor_table: EmbeddingTable, target_table: EmbeddingTable,
                     anchors: np.ndarray, targets: np.ndarray, labels: np.ndarray,
                     config: TrainConfig) -> np.ndarray:
    """Apply :func:`loss_and_grad` then :func:`adam_update` to both rows of each
    pair, one pair after another. Returns the pre-update loss of every pair.

    With ``config.threads > 1`` pairs are processed concurrently without
    synchronization, which makes results nondeterministic.
    """
    n = len(labels)
    losses = np.empty(n)
    if n == 0:
        return losses
    args = (
        anchor_table.vectors, anchor_table.adam_m, anchor_table.adam_v, anchor_table.adam_t,
        target_table.vectors, target_table.adam_m, target_table.adam_v, target_table.adam_t,
        np.ascontiguousarray(anchors, dtype=np.int64), np.ascontiguousarray(targets, dtype=np.int64),
        np.ascontiguousarray(labels, dtype=np.int64),
        float(config.learning_rate), float(config.adam_beta1), float(config.adam_beta2),
        float(config.adam_eps), LOG_FLOOR, losses,
    )
    if config.threads > 1:
        import numba

        numba.set_num_threads(min(config.threads, numba.config.NUMBA_NUM_THREADS))
        bad = _kernels.train_pairs_parallel(*args)
    else:
        bad = _kernels.train_pairs(*args)
    if bad >= 0:
        raise NumericError(
            f"non-finite loss for pair ({anchor_table.kind} {anchors[bad]}, "
            f"{target_table.kind} {targets[bad]}, label {labels[bad]})"
        )
    return losses


def init_model(vocab_size: int, n_users: int, n_items: int, config: TrainConfig):
    """Uniform(-scale, scale) tables for words, users and items, in that order."""
    if min(vocab_size, n_users, n_items) < 1:
        raise ValueError("table sizes must be >= 1")
    rng = np.random.default_rng(config.seed)
    s = config.scale
    return tuple(
        EmbeddingTable(kind, rng.uniform(-s, s, size=(n, config.dim)))
        for kind, n in zip(KINDS, (vocab_size, n_users, n_items))
    )
