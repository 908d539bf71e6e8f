"""Per-token features for downstream sequence models.

Three vectors per token: the positional encoding of its own anchor, the
encoding of the next token's anchor (known causally from the shapes placed
so far), and an integrated shape encoding that sums the positional encoding
over every cell the token covers. Also the per-class legality mask used to
constrain generation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codec import CompressedSequence, Placement
from .errors import DecodeBoundsError, MdbpeError
from .grid import unflatten
from .vocab import Vocabulary


class PositionalEncodingTable:
    """Sinusoidal encodings per axis, concatenated; pe_dim values per axis.

    Frequencies follow the usual geometric spacing with base period 10000,
    interleaving sine and cosine. Positions are pre-tabulated for the grid
    extents, so lookups are plain indexing.
    """

    def __init__(
        self, dims: Sequence[int], pe_dim: int, base: float = 10000.0
    ) -> None:
        if pe_dim <= 0 or pe_dim % 2 != 0:
            raise MdbpeError(f"pe_dim must be a positive even number, got {pe_dim}")
        self.dims = tuple(int(d) for d in dims)
        self.pe_dim = int(pe_dim)
        self.base = float(base)
        freq = self.base ** (
            -np.arange(0, pe_dim, 2, dtype=np.float64) / pe_dim
        )
        self.axis_tables: list[np.ndarray] = []
        for d in self.dims:
            angles = np.arange(d, dtype=np.float64)[:, None] * freq[None, :]
            table = np.empty((d, pe_dim), dtype=np.float64)
            table[:, 0::2] = np.sin(angles)
            table[:, 1::2] = np.cos(angles)
            self.axis_tables.append(table)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def width(self) -> int:
        return self.pe_dim * self.ndim

    def encode(self, position: Sequence[int]) -> np.ndarray:
        coords = tuple(int(c) for c in position)
        if len(coords) != self.ndim:
            raise MdbpeError(f"position {coords} has wrong arity")
        for k, (c, d) in enumerate(zip(coords, self.dims)):
            if not 0 <= c < d:
                raise MdbpeError(f"position {coords} outside grid {self.dims}")
        return np.concatenate(
            [self.axis_tables[k][c] for k, c in enumerate(coords)]
        )

    def end_vector(self) -> np.ndarray:
        """Reserved encoding for 'no next token': all zeros."""
        return np.zeros(self.width, dtype=np.float64)

    def sum_over(self, axis_coords: list[np.ndarray]) -> np.ndarray:
        """Sum of encode() over cells given per-axis coordinate arrays."""
        return np.concatenate(
            [self.axis_tables[k][axis_coords[k]].sum(axis=0)
             for k in range(self.ndim)]
        )


@dataclass
class TokenFeatures:
    anchor_pe: np.ndarray
    next_anchor_pe: np.ndarray
    ipe: np.ndarray


def ipe(
    vocab: Vocabulary,
    token_class: int,
    anchor: Sequence[int],
    pe: PositionalEncodingTable,
) -> np.ndarray:
    """Integrated encoding: sum of the positional encoding over every cell
    covered by the class's shape anchored at ``anchor``."""
    placement = Placement(pe.dims, vocab)
    geo = placement.geometry(int(token_class))
    coords = tuple(int(c) for c in anchor)
    axis_coords = []
    for k, d in enumerate(pe.dims):
        cs = coords[k] + geo.axis_offsets[k]
        if cs.min() < 0 or cs.max() >= d:
            raise DecodeBoundsError(
                f"class {token_class} at {coords} exceeds grid {pe.dims}"
            )
        axis_coords.append(cs)
    return pe.sum_over(axis_coords)


def emit_features(
    seq: CompressedSequence,
    vocab: Vocabulary,
    pe: PositionalEncodingTable,
) -> list[TokenFeatures]:
    """Replay the decoder placement and emit features per token.

    Token i's next-anchor encoding depends only on tokens 0..i, so features
    of any prefix equal the prefix of the features. A sequence that does not
    cover the grid completely is fine; the all-zeros end encoding is used
    only when the last token completes coverage.
    """
    if pe.dims != seq.dims:
        raise MdbpeError(
            f"encoding table covers {pe.dims}, sequence is over {seq.dims}"
        )
    placement = Placement(seq.dims, vocab)
    out: list[TokenFeatures] = []
    for token_class in seq.tokens:
        token_class = int(token_class)
        anchor_flat = placement.next_uncovered()
        geo = placement.geometry(token_class)
        placement.place(token_class)
        coords = unflatten(anchor_flat, seq.dims)
        anchor_pe = pe.encode(coords)
        integrated = pe.sum_over(
            [coords[k] + geo.axis_offsets[k] for k in range(len(seq.dims))]
        )
        nxt = placement.next_uncovered()
        next_pe = (
            pe.end_vector() if nxt is None else pe.encode(unflatten(nxt, seq.dims))
        )
        out.append(TokenFeatures(anchor_pe, next_pe, integrated))
    return out


class GenerationState:
    """Coverage state during autoregressive generation."""

    def __init__(self, dims: Sequence[int], vocab: Vocabulary) -> None:
        self._placement = Placement(dims, vocab)
        self.vocab = vocab

    @property
    def dims(self) -> tuple[int, ...]:
        return self._placement.dims

    @property
    def tokens(self) -> list[int]:
        return self._placement.tokens

    @property
    def complete(self) -> bool:
        return self._placement.complete

    def next_anchor(self) -> tuple[int, ...] | None:
        flat = self._placement.next_uncovered()
        return None if flat is None else unflatten(flat, self.dims)

    def place(self, token_class: int) -> None:
        self._placement.place(int(token_class))

    def sequence(self) -> CompressedSequence:
        return CompressedSequence(
            self.dims, np.array(self.tokens, dtype=np.int32)
        )


def legal_mask(state: GenerationState, vocab: Vocabulary) -> np.ndarray:
    """Per-class legality at the next anchor: in bounds and overlap-free.

    Single-cell classes are always legal while any cell is uncovered, so the
    mask is never all-false.
    """
    if vocab is not state.vocab and vocab != state.vocab:
        raise MdbpeError("mask vocabulary differs from the state's vocabulary")
    placement = state._placement
    anchor_flat = placement.next_uncovered()
    if anchor_flat is None:
        raise MdbpeError("grid is fully covered; nothing can be placed")
    mask = np.zeros(vocab.size, dtype=bool)
    for cls in range(vocab.size):
        mask[cls] = placement.fits(cls, anchor_flat)
    return mask
