"""Dense embedding matrices: loading, saving, subsetting, validation.

The canonical interchange format is the one used by pretrained GloVe /
word2vec text distributions: one word per line, the token followed by d
whitespace-separated decimal numbers.  A binary cache format ("EMB1") is
provided for fast reloads.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Iterable, Optional, Sequence

import numpy as np

EMB1_MAGIC = b"EMB1"

# Nine significant decimal digits round-trip any float32 exactly.
_TEXT_FLOAT_FMT = "%.9g"


class EmbeddingFormatError(ValueError):
    """Malformed embedding file (text or binary)."""


class Vocabulary:
    """Ordered list of unique tokens with an inverse token -> row map."""

    def __init__(self, words: Sequence[str]):
        words = list(words)
        if not words:
            raise ValueError("vocabulary must contain at least one token")
        self.words = words
        self.index = {w: i for i, w in enumerate(words)}
        if len(self.index) != len(words):
            seen = set()
            dup = next(w for w in words if w in seen or seen.add(w))
            raise ValueError(f"duplicate token in vocabulary: {dup!r}")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.words == other.words

    def __repr__(self) -> str:
        return f"Vocabulary({len(self.words)} tokens)"


class Embedding:
    """A V x d real matrix with an aligned vocabulary.

    Immutable after construction: the matrix is marked read-only so the
    object can be shared freely across threads.
    """

    def __init__(self, vocab: Vocabulary, matrix: np.ndarray):
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {matrix.shape}")
        if matrix.shape[0] != len(vocab):
            raise ValueError(
                f"matrix has {matrix.shape[0]} rows but vocabulary has "
                f"{len(vocab)} tokens"
            )
        if not np.all(np.isfinite(matrix)):
            raise ValueError("matrix contains non-finite values")
        matrix.setflags(write=False)
        self.vocab = vocab
        self.matrix = matrix

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def row(self, token: str) -> np.ndarray:
        return self.matrix[self.vocab.index[token]]

    def __repr__(self) -> str:
        v, d = self.matrix.shape
        return f"Embedding(V={v}, d={d})"


def load_text(path, expected_d: Optional[int] = None) -> Embedding:
    """Parse a "token v1 ... vd" text embedding file.

    d is inferred from the first non-empty line unless expected_d is given.
    Dimension mismatches, duplicate tokens, non-numeric fields and empty
    files are all rejected with the offending line number.
    """
    words: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    d = expected_d
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, fields = parts[0], parts[1:]
            if d is None:
                d = len(fields)
                if d == 0:
                    raise EmbeddingFormatError(
                        f"{path}: line {lineno}: no vector values after token"
                    )
            if len(fields) != d:
                raise EmbeddingFormatError(
                    f"{path}: line {lineno}: dimension mismatch "
                    f"(expected {d} values, found {len(fields)})"
                )
            if token in seen:
                raise EmbeddingFormatError(
                    f"{path}: line {lineno}: duplicate token {token!r}"
                )
            try:
                row = np.array([float(x) for x in fields], dtype=np.float32)
            except ValueError as exc:
                raise EmbeddingFormatError(
                    f"{path}: line {lineno}: non-numeric field ({exc})"
                ) from None
            seen.add(token)
            words.append(token)
            rows.append(row)
    if not words:
        raise EmbeddingFormatError(f"{path}: empty embedding file")
    return Embedding(Vocabulary(words), np.vstack(rows))


def save_text(e: Embedding, path) -> None:
    """Write the line format load_text reads, 9 significant digits."""
    if len(e.vocab) == 0:
        raise ValueError("refusing to write an empty embedding")
    with open(path, "w", encoding="utf-8") as fh:
        for token, row in zip(e.vocab.words, e.matrix):
            fh.write(token)
            for v in row:
                fh.write(" ")
                fh.write(_TEXT_FLOAT_FMT % v)
            fh.write("\n")


def subset(e: Embedding, keep: Iterable[str]) -> Embedding:
    """Restrict to the tokens in keep (in keep order); absent tokens are
    skipped.  Retained rows are copied verbatim."""
    idx = [e.vocab.index[t] for t in keep if t in e.vocab]
    if not idx:
        raise ValueError("subset result is empty: no requested token in vocabulary")
    words = [e.vocab.words[i] for i in idx]
    return Embedding(Vocabulary(words), e.matrix[idx])


# --- binary vocabulary block, shared by every container format -------------
#
# Each token is a u16 byte length followed by that many UTF-8 bytes.

def write_vocab_block(fh: BinaryIO, vocab: Vocabulary) -> None:
    for token in vocab.words:
        raw = token.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"token too long for format: {token[:32]!r}...")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)


def read_vocab_block(fh: BinaryIO, count: int) -> Vocabulary:
    words = []
    for _ in range(count):
        (n,) = struct.unpack("<H", read_exact(fh, 2))
        words.append(read_exact(fh, n).decode("utf-8"))
    return Vocabulary(words)


def read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise EmbeddingFormatError(
            f"truncated stream: wanted {n} bytes, got {len(buf)}"
        )
    return buf


# --- EMB1 binary cache ------------------------------------------------------

def save_cache(e: Embedding, path) -> None:
    """Binary cache: magic "EMB1", u32 V, u32 d, vocab block, V*d float32."""
    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<II", *e.matrix.shape))
        write_vocab_block(fh, e.vocab)
        fh.write(e.matrix.astype("<f4").tobytes())


def load_cache(path) -> Embedding:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMB1_MAGIC:
            raise EmbeddingFormatError(
                f"{path}: bad magic {magic!r}, expected {EMB1_MAGIC!r}"
            )
        v, d = struct.unpack("<II", read_exact(fh, 8))
        vocab = read_vocab_block(fh, v)
        data = np.frombuffer(read_exact(fh, 4 * v * d), dtype="<f4")
        return Embedding(vocab, data.reshape(v, d))
