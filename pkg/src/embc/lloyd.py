"""Per-dimension adaptive level quantization of an embedding.

Each column of the matrix gets its own small table of representative
levels, fitted by Lloyd's algorithm (alternating nearest-level assignment
and centroid updates, i.e. 1-D k-means).  Elements are then stored as
level indices; with 8 levels that is 3 bits per element.
"""

from __future__ import annotations

import math
import struct
from typing import Optional

import numpy as np

from . import embio
from .bits import BitReader, BitWriter
from .embio import Embedding, Vocabulary

LQE1_MAGIC = b"LQE1"

DEFAULT_MAX_ITERS = 100
# Relative to the value range of the dimension being fitted.
DEFAULT_TOL = 1e-7


class LevelTable:
    """Ascending representative values for one dimension.

    When a dimension has fewer distinct values than requested levels the
    table is padded by repeating the top level, so every table in a
    quantized embedding has the same length.  Duplicate entries (padding,
    or distinct levels collapsed by float32 storage) are never selected
    during assignment: ties go to the lowest index.
    """

    def __init__(self, levels: np.ndarray):
        levels = np.asarray(levels, dtype=np.float64)
        if levels.ndim != 1 or levels.size == 0:
            raise ValueError("levels must be a non-empty 1-D array")
        if not np.all(np.isfinite(levels)):
            raise ValueError("levels must be finite")
        if np.any(np.diff(levels) < 0):
            raise ValueError("levels must be ascending")
        self.levels = levels
        self._distinct, self._first_index = np.unique(levels, return_index=True)

    @property
    def n_effective(self) -> int:
        """Number of distinct levels actually selectable."""
        return self._distinct.size

    def __len__(self) -> int:
        return self.levels.size

    def assign(self, values: np.ndarray) -> np.ndarray:
        """Nearest-level index for each value; ties take the lower index."""
        values = np.asarray(values, dtype=np.float64)
        if self._distinct.size == 1:
            return np.zeros(values.shape, dtype=np.int64)
        # v strictly greater than the midpoint between distinct levels i
        # and i+1 belongs to i+1; equality stays at i (lower index wins).
        midpoints = (self._distinct[:-1] + self._distinct[1:]) / 2.0
        return self._first_index[np.searchsorted(midpoints, values, side="left")]

    def __repr__(self) -> str:
        return f"LevelTable({self.levels!r})"


class QuantizedEmbedding:
    """Level tables for every dimension plus per-element level indices."""

    def __init__(self, vocab: Vocabulary, tables: list[LevelTable],
                 indices: np.ndarray):
        indices = np.ascontiguousarray(indices)
        if indices.ndim != 2:
            raise ValueError("indices must be 2-D")
        if indices.shape[0] != len(vocab):
            raise ValueError("index rows must match vocabulary size")
        if indices.shape[1] != len(tables):
            raise ValueError("one level table per dimension required")
        n_levels = len(tables[0])
        if any(len(t) != n_levels for t in tables):
            raise ValueError("all level tables must have equal length")
        if indices.size and (indices.min() < 0 or indices.max() >= n_levels):
            raise ValueError("index out of level-table range")
        self.vocab = vocab
        self.tables = tables
        self.indices = indices
        self.n_levels = n_levels

    @property
    def d(self) -> int:
        return self.indices.shape[1]

    @property
    def bits_per_element(self) -> int:
        return bits_per_index(self.n_levels)

    @property
    def payload_bits_per_word(self) -> int:
        """Index payload per word; 300 dims at 8 levels is 900 bits."""
        return self.d * self.bits_per_element


def bits_per_index(n_levels: int) -> int:
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    return max(0, math.ceil(math.log2(n_levels)))


def quantization_error(values: np.ndarray, table: LevelTable) -> float:
    """Sum over values of the squared distance to the nearest level."""
    values = np.asarray(values, dtype=np.float64)
    deltas = values - table.levels[table.assign(values)]
    return float(np.dot(deltas, deltas))


def initial_levels(values: np.ndarray, n_levels: int) -> np.ndarray:
    """Deterministic start: the (i+0.5)/n quantiles of the sorted values."""
    qs = (np.arange(n_levels) + 0.5) / n_levels
    return np.quantile(np.sort(values), qs)


def fit_dimension(values: np.ndarray, n_levels: int,
                  max_iters: int = DEFAULT_MAX_ITERS,
                  tol: Optional[float] = None,
                  history: Optional[list] = None) -> LevelTable:
    """Fit a level table to one dimension's values with Lloyd's algorithm.

    Starts from uniform quantiles of the sorted values and alternates
    nearest-level assignment with centroid updates until assignments stop
    changing, levels move less than tol (default 1e-7 of the value range),
    or max_iters passes.  The quantization error never increases from one
    pass to the next; pass a list as `history` to record it per pass.

    n_levels larger than the number of distinct values is clamped, with
    the table padded by repeating the top level.  A level whose cluster
    empties is reseeded at the midpoint of the widest gap between the
    surviving levels.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("cannot fit levels to an empty dimension")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")

    distinct = np.unique(values)
    n_fit = min(n_levels, distinct.size)
    value_range = float(distinct[-1] - distinct[0])
    if tol is None:
        tol = DEFAULT_TOL * value_range

    levels = np.unique(initial_levels(values, n_fit))
    if levels.size < n_fit:
        # Quantile seeds coincided on repetitive data; top up with unused
        # distinct data values so we start with n_fit distinct seeds.
        missing = np.setdiff1d(distinct, levels)
        picks = np.linspace(0, missing.size - 1, n_fit - levels.size).astype(int)
        levels = np.sort(np.concatenate([levels, missing[picks]]))

    sorted_vals = np.sort(values)
    csum = np.concatenate([[0.0], np.cumsum(sorted_vals)])

    prev_assign = None
    for _ in range(max_iters):
        table = LevelTable(levels)
        assign_sorted = table.assign(sorted_vals)
        if history is not None:
            deltas = sorted_vals - levels[assign_sorted]
            history.append(float(np.dot(deltas, deltas)))
        if prev_assign is not None and np.array_equal(assign_sorted, prev_assign):
            break
        prev_assign = assign_sorted

        # Values are sorted, so each cluster is a contiguous run.
        ids = np.arange(levels.size)
        starts = np.searchsorted(assign_sorted, ids, side="left")
        ends = np.searchsorted(assign_sorted, ids, side="right")
        counts = ends - starts
        nonempty = counts > 0
        centroids = (csum[ends[nonempty]] - csum[starts[nonempty]]) / counts[nonempty]

        filled = np.sort(centroids)
        for _ in range(int(np.sum(~nonempty))):
            if filled.size >= 2:
                gaps = np.diff(filled)
                g = int(np.argmax(gaps))
                seed = (filled[g] + filled[g + 1]) / 2.0
            else:
                seed = filled[0]
            filled = np.sort(np.append(filled, seed))
        moved = float(np.max(np.abs(filled - levels)))
        levels = filled
        if moved < tol:
            break

    if levels.size < n_levels:
        levels = np.concatenate(
            [levels, np.full(n_levels - levels.size, levels[-1])]
        )
    return LevelTable(levels)


def quantize(e: Embedding, n_levels: int,
             max_iters: int = DEFAULT_MAX_ITERS,
             tol: Optional[float] = None) -> QuantizedEmbedding:
    """Fit one level table per dimension and encode every element as the
    index of its nearest level (ties to the lower index)."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    v, d = e.matrix.shape
    dtype = np.uint8 if n_levels <= 256 else np.uint16
    tables = []
    indices = np.empty((v, d), dtype=dtype)
    for j in range(d):
        col = e.matrix[:, j].astype(np.float64)
        table = fit_dimension(col, n_levels, max_iters=max_iters, tol=tol)
        tables.append(table)
        indices[:, j] = table.assign(col)
    return QuantizedEmbedding(e.vocab, tables, indices)


def dequantize(q: QuantizedEmbedding) -> Embedding:
    """Element (i, j) becomes tables[j].levels[indices[i, j]]."""
    v, d = q.indices.shape
    out = np.empty((v, d), dtype=np.float64)
    for j, table in enumerate(q.tables):
        out[:, j] = table.levels[q.indices[:, j]]
    return Embedding(q.vocab, out.astype(np.float32))


# --- LQE1 container ---------------------------------------------------------
#
# magic "LQE1", u32 V, u32 d, u16 n_levels, vocab block, d*n_levels float32
# level tables (dimension-major), then per word a bitstream of d indices at
# ceil(log2 n_levels) bits each, MSB-first, padded to a byte per word.
# The table overhead is the equivalent of storing n_levels extra word-vectors.

def save_lqe(q: QuantizedEmbedding, path) -> None:
    bits = bits_per_index(q.n_levels)
    with open(path, "wb") as fh:
        fh.write(LQE1_MAGIC)
        fh.write(struct.pack("<IIH", len(q.vocab), q.d, q.n_levels))
        embio.write_vocab_block(fh, q.vocab)
        tables = np.stack([t.levels for t in q.tables])
        fh.write(tables.astype("<f4").tobytes())
        for row in q.indices:
            w = BitWriter()
            for idx in row:
                w.write(int(idx), bits)
            fh.write(w.getvalue())


def load_lqe(path) -> QuantizedEmbedding:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != LQE1_MAGIC:
            raise embio.EmbeddingFormatError(
                f"{path}: bad magic {magic!r}, expected {LQE1_MAGIC!r}"
            )
        v, d, n_levels = struct.unpack("<IIH", embio.read_exact(fh, 10))
        vocab = embio.read_vocab_block(fh, v)
        raw = np.frombuffer(embio.read_exact(fh, 4 * d * n_levels), dtype="<f4")
        table_values = raw.reshape(d, n_levels).astype(np.float64)
        tables = [LevelTable(t) for t in table_values]
        bits = bits_per_index(n_levels)
        word_bytes = (d * bits + 7) // 8
        dtype = np.uint8 if n_levels <= 256 else np.uint16
        indices = np.zeros((v, d), dtype=dtype)
        for i in range(v):
            r = BitReader(embio.read_exact(fh, word_bytes))
            for j in range(d):
                indices[i, j] = r.read(bits)
        return QuantizedEmbedding(vocab, tables, indices)
