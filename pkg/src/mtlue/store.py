"""Text persistence for embedding tables.

Line 1 is ``<kind> <count> <dim> v1``; each following line is
``<id> <f_1> ... <f_dim>`` with 9 significant digits.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sgns import KINDS

FORMAT_VERSION = "v1"
DIGITS = 9


class EmbeddingFileError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class EmbeddingFile:
    kind: str
    ids: list[str]
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {i: self.vectors[n] for n, i in enumerate(self.ids)}


def _fmt(x: float) -> str:
    return f"{x:.{DIGITS}g}"


def save_embeddings(kind: str, ids, vectors, path) -> None:
    if kind not in KINDS:
        raise EmbeddingFileError(f"unknown kind {kind!r}")
    vectors = np.asarray(vectors, dtype=np.float64)
    ids = [str(i) for i in ids]
    if vectors.ndim != 2 or len(ids) != len(vectors):
        raise EmbeddingFileError("need one vector row per id")
    if not np.all(np.isfinite(vectors)):
        raise EmbeddingFileError("refusing to save non-finite values")
    if len(set(ids)) != len(ids):
        raise EmbeddingFileError("duplicate ids")
    for i in ids:
        if not i or any(c.isspace() for c in i):
            raise EmbeddingFileError(f"id {i!r} is empty or contains whitespace")
    lines = [f"{kind} {len(ids)} {vectors.shape[1]} {FORMAT_VERSION}"]
    lines += [" ".join([i] + [_fmt(x) for x in row]) for i, row in zip(ids, vectors.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embeddings(path) -> EmbeddingFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise EmbeddingFileError(f"cannot read {path}: {e}") from e
    lines = text.splitlines()
    if not lines:
        raise EmbeddingFileError("empty file, missing header", 1)
    head = lines[0].split()
    if len(head) != 4 or head[3] != FORMAT_VERSION or head[0] not in KINDS:
        raise EmbeddingFileError(f"malformed header {lines[0]!r}", 1)
    try:
        count, dim = int(head[1]), int(head[2])
    except ValueError:
        raise EmbeddingFileError(f"malformed header {lines[0]!r}", 1) from None
    if count < 0 or dim < 1:
        raise EmbeddingFileError(f"malformed header {lines[0]!r}", 1)

    ids, seen = [], set()
    vectors = np.empty((count, dim))
    body = lines[1:]
    for n, line in enumerate(body, start=2):
        if n - 2 >= count:
            if line.strip():
                raise EmbeddingFileError(f"more rows than the {count} declared", n)
            continue
        parts = line.split()
        if len(parts) != dim + 1:
            raise EmbeddingFileError(f"expected id plus {dim} values, got {len(parts) - 1} values", n)
        if parts[0] in seen:
            raise EmbeddingFileError(f"duplicate id {parts[0]!r}", n)
        try:
            vectors[n - 2] = [float(x) for x in parts[1:]]
        except ValueError:
            raise EmbeddingFileError("non-numeric value", n) from None
        if not np.all(np.isfinite(vectors[n - 2])):
            raise EmbeddingFileError("non-finite value", n)
        seen.add(parts[0])
        ids.append(parts[0])
    if len(ids) < count:
        raise EmbeddingFileError(f"header declares {count} rows, file has {len(ids)}", len(lines) + 1)
    return EmbeddingFile(head[0], ids, vectors)
