"""Lossless conversion between token grids and compressed sequences.

Encoding lists instance classes in anchor scan order. Decoding inverts that:
each next token is placed with its anchor on the scan-minimal uncovered cell,
which is exactly where the encoder's next anchor had to be.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DecodeBoundsError,
    DecodeOverlapError,
    DecodeOverrunError,
    DecodeUnderrunError,
    GridError,
    MdbpeError,
    VocabError,
)
from .grid import TokenGrid, strides_of, unflatten
from .trainer import apply_rules
from .vocab import Vocabulary, base_cells, shape_of


@dataclass(eq=False)
class CompressedSequence:
    """Token classes in anchor scan order plus the original grid extents."""

    dims: tuple[int, ...]
    tokens: np.ndarray

    def __post_init__(self) -> None:
        self.dims = tuple(int(d) for d in self.dims)
        self.tokens = np.ascontiguousarray(self.tokens, dtype=np.int32)

    def __len__(self) -> int:
        return int(self.tokens.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CompressedSequence):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.tokens, other.tokens)


class _PlacedShape:
    """Per-class placement geometry: flat deltas, per-axis offset ranges, and
    the base class carried by each covered cell."""

    __slots__ = ("flat_deltas", "axis_offsets", "off_min", "off_max", "base")

    def __init__(self, expansion, strides: tuple[int, ...], ndim: int) -> None:
        offs = np.array([off for off, _ in expansion], dtype=np.int64)
        offs = offs.reshape(len(expansion), ndim)
        self.flat_deltas = offs @ np.array(strides, dtype=np.int64)
        self.axis_offsets = [offs[:, k] for k in range(ndim)]
        self.off_min = offs.min(axis=0)
        self.off_max = offs.max(axis=0)
        self.base = np.array([b for _, b in expansion], dtype=np.int32)


class Placement:
    """Coverage state for placing token shapes anchor-first in scan order."""

    def __init__(self, dims: Sequence[int], vocab: Vocabulary) -> None:
        self.dims = tuple(int(d) for d in dims)
        if len(self.dims) != vocab.ndim:
            raise MdbpeError(
                f"grid has {len(self.dims)} axes, vocabulary expects {vocab.ndim}"
            )
        self.vocab = vocab
        self.strides = strides_of(self.dims)
        self.n_cells = int(np.prod(self.dims))
        self.covered = np.zeros(self.n_cells, dtype=bool)
        self.tokens: list[int] = []
        self._cursor = 0
        self._shapes: dict[int, _PlacedShape] = {}

    def geometry(self, token_class: int) -> _PlacedShape:
        entry = self._shapes.get(token_class)
        if entry is None:
            expansion = base_cells(self.vocab, token_class)
            entry = _PlacedShape(expansion, self.strides, len(self.dims))
            self._shapes[token_class] = entry
        return entry

    @property
    def complete(self) -> bool:
        return self.next_uncovered() is None

    def next_uncovered(self) -> int | None:
        """Flat index of the scan-minimal uncovered cell, or None."""
        c = self._cursor
        while c < self.n_cells and self.covered[c]:
            c += 1
        self._cursor = c
        return c if c < self.n_cells else None

    def fits(self, token_class: int, anchor_flat: int) -> bool:
        geo = self.geometry(token_class)
        coords = unflatten(anchor_flat, self.dims)
        for k, d in enumerate(self.dims):
            if coords[k] + geo.off_min[k] < 0 or coords[k] + geo.off_max[k] >= d:
                return False
        cells = anchor_flat + geo.flat_deltas
        return not self.covered[cells].any()

    def place(self, token_class: int) -> np.ndarray:
        """Place the class at the next anchor; returns covered flat cells."""
        anchor_flat = self.next_uncovered()
        if anchor_flat is None:
            raise DecodeOverrunError(
                f"token {token_class} supplied after the grid was fully covered"
            )
        geo = self.geometry(token_class)
        coords = unflatten(anchor_flat, self.dims)
        for k, d in enumerate(self.dims):
            if coords[k] + geo.off_min[k] < 0 or coords[k] + geo.off_max[k] >= d:
                raise DecodeBoundsError(
                    f"class {token_class} at {coords} exceeds grid {self.dims}"
                )
        cells = anchor_flat + geo.flat_deltas
        if self.covered[cells].any():
            raise DecodeOverlapError(
                f"class {token_class} at {coords} overlaps covered cells"
            )
        self.covered[cells] = True
        self.tokens.append(int(token_class))
        return cells


def encode(
    grid: TokenGrid, vocab: Vocabulary, validate: bool = True
) -> CompressedSequence:
    """Extract the sequence: one class per instance, in anchor scan order."""
    if grid.ndim != vocab.ndim:
        raise MdbpeError(
            f"grid has {grid.ndim} axes, vocabulary expects {vocab.ndim}"
        )
    _, first_idx = np.unique(grid.ids, return_index=True)
    anchors = np.sort(first_idx)
    tokens = grid.classes[anchors]
    if validate:
        _check_instance_shapes(grid, vocab)
    return CompressedSequence(grid.dims, tokens)


def _check_instance_shapes(grid: TokenGrid, vocab: Vocabulary) -> None:
    if grid.classes.size and int(grid.classes.max()) >= vocab.size:
        raise VocabError(
            f"grid class {int(grid.classes.max())} out of range "
            f"(vocabulary size {vocab.size})"
        )
    order = np.argsort(grid.ids, kind="stable")
    boundaries = np.flatnonzero(np.diff(grid.ids[order])) + 1
    strides = np.array(strides_of(grid.dims), dtype=np.int64)
    dims = np.array(grid.dims, dtype=np.int64)
    for cells in np.split(order, boundaries):
        cells = np.sort(cells)
        coords = cells[:, None] // strides % dims
        offsets = coords - coords[0]
        got = frozenset(map(tuple, offsets.tolist()))
        cls = int(grid.classes[cells[0]])
        want = shape_of(vocab, cls)
        if got != want:
            raise GridError(
                f"instance {int(grid.ids[cells[0]])} does not match the "
                f"shape of class {cls}"
            )


def decode(seq: CompressedSequence, vocab: Vocabulary) -> TokenGrid:
    """Rebuild the grid by placing each token at the scan-minimal uncovered
    cell. Fresh dense instance IDs are assigned in placement order."""
    placement = Placement(seq.dims, vocab)
    classes = np.zeros(placement.n_cells, dtype=np.int32)
    ids = np.zeros(placement.n_cells, dtype=np.int32)
    for i, token_class in enumerate(seq.tokens):
        cells = placement.place(int(token_class))
        classes[cells] = token_class
        ids[cells] = i
    if not placement.complete:
        missing = int(placement.n_cells - placement.covered.sum())
        raise DecodeUnderrunError(
            f"tokens exhausted with {missing} cells still uncovered"
        )
    return TokenGrid(seq.dims, classes, ids)


def decode_to_base(seq: CompressedSequence, vocab: Vocabulary) -> TokenGrid:
    """Decode and expand every token to its base constituents: the fully
    uncompressed grid, each cell a single-cell instance of a base class."""
    placement = Placement(seq.dims, vocab)
    classes = np.zeros(placement.n_cells, dtype=np.int32)
    for token_class in seq.tokens:
        token_class = int(token_class)
        geo = placement.geometry(token_class)
        cells = placement.place(token_class)
        classes[cells] = geo.base
    if not placement.complete:
        missing = int(placement.n_cells - placement.covered.sum())
        raise DecodeUnderrunError(
            f"tokens exhausted with {missing} cells still uncovered"
        )
    return TokenGrid(
        seq.dims, classes, np.arange(placement.n_cells, dtype=np.int32)
    )


@dataclass
class CompressionReport:
    """Held-out compression measurement: total tokens over total cells."""

    lengths: np.ndarray
    total_cells: int
    total_tokens: int
    mean_length: float
    max_length: int
    hist_counts: np.ndarray = field(repr=False)
    hist_edges: np.ndarray = field(repr=False)

    @property
    def ratio(self) -> float:
        return self.total_tokens / self.total_cells

    @property
    def percent(self) -> float:
        return 100.0 * self.ratio

    def to_dict(self) -> dict:
        return {
            "grids": int(self.lengths.size),
            "total_cells": self.total_cells,
            "total_tokens": self.total_tokens,
            "compression_percent": self.percent,
            "mean_length": self.mean_length,
            "max_length": self.max_length,
            "lengths": self.lengths.tolist(),
        }


def compression_stats(
    corpus: Sequence[TokenGrid],
    vocab: Vocabulary,
    neighbor_axes: tuple[int, ...] | None = None,
    threads: int = 1,
    assume_compressed: bool = False,
) -> CompressionReport:
    """Compress the corpus with the vocabulary's rules and report lengths.

    Pass assume_compressed=True when the grids already carry this
    vocabulary's merges (skips the replay).
    """
    if not corpus:
        raise MdbpeError("corpus is empty")
    grids = corpus if assume_compressed else apply_rules(
        corpus, vocab, neighbor_axes, threads
    )
    lengths = np.array([g.n_instances for g in grids], dtype=np.int64)
    total_cells = int(sum(g.n_cells for g in grids))
    counts, edges = np.histogram(lengths, bins="auto")
    return CompressionReport(
        lengths=lengths,
        total_cells=total_cells,
        total_tokens=int(lengths.sum()),
        mean_length=float(lengths.mean()),
        max_length=int(lengths.max()),
        hist_counts=counts,
        hist_edges=edges,
    )
