"""Binary containers for grids, sequences, features, and codebooks.

All multi-byte integers are u32 little-endian. Single items carry a 4-byte
magic, a version byte, and their payload; corpus containers carry their own
magic, a version byte, an item count, and the concatenated item payloads
with the per-item magic stripped.

  MDTG  one grid: ndim u8, dims, then per-cell classes (row-major)
  MDTC  grid corpus
  MDSQ  one sequence: ndim u8, dims, token count, token classes
  MDSC  sequence corpus
  MDFT  one feature set: token count, vector width, then per token the
        anchor, next-anchor, and integrated-shape float32 vectors
  MDFC  feature corpus
  MDCB  codebook: count, dim, float32 vectors
"""

from __future__ import annotations

import io
import json
from typing import Sequence

import numpy as np

from .codec import CompressedSequence
from .collapse import Codebook, CollapseMap
from .errors import FormatError
from .grid import TokenGrid, from_classes
from .seqfeat import TokenFeatures

_VERSION = 1

GRID_MAGIC = b"MDTG"
GRID_CORPUS_MAGIC = b"MDTC"
SEQ_MAGIC = b"MDSQ"
SEQ_CORPUS_MAGIC = b"MDSC"
FEAT_MAGIC = b"MDFT"
FEAT_CORPUS_MAGIC = b"MDFC"
CODEBOOK_MAGIC = b"MDCB"


def _u32(values) -> bytes:
    return np.asarray(values, dtype="<u4").tobytes()


class _Reader:
    def __init__(self, data: bytes, what: str) -> None:
        self.stream = io.BytesIO(data)
        self.what = what

    def bytes(self, n: int) -> bytes:
        out = self.stream.read(n)
        if len(out) != n:
            raise FormatError(f"truncated {self.what}")
        return out

    def u8(self) -> int:
        return self.bytes(1)[0]

    def u32(self) -> int:
        return int(np.frombuffer(self.bytes(4), dtype="<u4")[0])

    def u32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.bytes(4 * count), dtype="<u4")

    def f32_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.bytes(4 * count), dtype="<f4")

    def expect_magic(self, magic: bytes) -> None:
        if self.bytes(len(magic)) != magic:
            raise FormatError(f"not a {magic.decode()} {self.what}")

    def expect_version(self) -> None:
        version = self.u8()
        if version != _VERSION:
            raise FormatError(f"unsupported {self.what} version {version}")

    def expect_eof(self) -> None:
        if self.stream.read(1):
            raise FormatError(f"trailing bytes in {self.what}")


def _grid_payload(grid: TokenGrid) -> bytes:
    head = bytes([_VERSION, grid.ndim]) + _u32(grid.dims)
    return head + _u32(grid.classes)


def _read_grid_payload(r: _Reader) -> TokenGrid:
    r.expect_version()
    ndim = r.u8()
    if not 1 <= ndim <= 3:
        raise FormatError(f"grid has unsupported axis count {ndim}")
    dims = tuple(int(d) for d in r.u32_array(ndim))
    if any(d == 0 for d in dims):
        raise FormatError("grid has a zero extent")
    n = int(np.prod(dims))
    raw = r.u32_array(n)
    if raw.size and int(raw.max()) >= 2**31:
        raise FormatError("class value exceeds the signed 32-bit range")
    return from_classes(dims, raw.astype(np.int32))


def write_grid(grid: TokenGrid) -> bytes:
    """MDTG stores the per-cell classes; instance structure is derived."""
    return GRID_MAGIC + _grid_payload(grid)


def read_grid(data: bytes) -> TokenGrid:
    r = _Reader(data, "grid file")
    r.expect_magic(GRID_MAGIC)
    grid = _read_grid_payload(r)
    r.expect_eof()
    return grid


def write_grid_corpus(grids: Sequence[TokenGrid]) -> bytes:
    out = [GRID_CORPUS_MAGIC, bytes([_VERSION]), _u32([len(grids)])]
    out.extend(_grid_payload(g) for g in grids)
    return b"".join(out)


def read_grid_corpus(data: bytes) -> list[TokenGrid]:
    r = _Reader(data, "grid corpus")
    r.expect_magic(GRID_CORPUS_MAGIC)
    r.expect_version()
    count = r.u32()
    grids = [_read_grid_payload(r) for _ in range(count)]
    r.expect_eof()
    return grids


def _seq_payload(seq: CompressedSequence) -> bytes:
    head = bytes([_VERSION, len(seq.dims)]) + _u32(seq.dims)
    return head + _u32([len(seq)]) + _u32(seq.tokens)


def _read_seq_payload(r: _Reader) -> CompressedSequence:
    r.expect_version()
    ndim = r.u8()
    if not 1 <= ndim <= 3:
        raise FormatError(f"sequence has unsupported axis count {ndim}")
    dims = tuple(int(d) for d in r.u32_array(ndim))
    count = r.u32()
    raw = r.u32_array(count)
    if raw.size and int(raw.max()) >= 2**31:
        raise FormatError("token class exceeds the signed 32-bit range")
    return CompressedSequence(dims, raw.astype(np.int32))


def write_sequence(seq: CompressedSequence) -> bytes:
    return SEQ_MAGIC + _seq_payload(seq)


def read_sequence(data: bytes) -> CompressedSequence:
    r = _Reader(data, "sequence file")
    r.expect_magic(SEQ_MAGIC)
    seq = _read_seq_payload(r)
    r.expect_eof()
    return seq


def write_seq_corpus(seqs: Sequence[CompressedSequence]) -> bytes:
    out = [SEQ_CORPUS_MAGIC, bytes([_VERSION]), _u32([len(seqs)])]
    out.extend(_seq_payload(s) for s in seqs)
    return b"".join(out)


def read_seq_corpus(data: bytes) -> list[CompressedSequence]:
    r = _Reader(data, "sequence corpus")
    r.expect_magic(SEQ_CORPUS_MAGIC)
    r.expect_version()
    count = r.u32()
    seqs = [_read_seq_payload(r) for _ in range(count)]
    r.expect_eof()
    return seqs


def _features_payload(features: Sequence[TokenFeatures], width: int) -> bytes:
    out = [bytes([_VERSION]), _u32([len(features), width])]
    for f in features:
        for vec in (f.anchor_pe, f.next_anchor_pe, f.ipe):
            if vec.shape != (width,):
                raise FormatError(
                    f"feature vector width {vec.shape} does not match {width}"
                )
            out.append(np.asarray(vec, dtype="<f4").tobytes())
    return b"".join(out)


def _read_features_payload(r: _Reader) -> list[TokenFeatures]:
    r.expect_version()
    count = r.u32()
    width = r.u32()
    out = []
    for _ in range(count):
        anchor = r.f32_array(width).astype(np.float64)
        nxt = r.f32_array(width).astype(np.float64)
        integrated = r.f32_array(width).astype(np.float64)
        out.append(TokenFeatures(anchor, nxt, integrated))
    return out


def write_features(features: Sequence[TokenFeatures], width: int) -> bytes:
    return FEAT_MAGIC + _features_payload(features, width)


def read_features(data: bytes) -> list[TokenFeatures]:
    r = _Reader(data, "feature file")
    r.expect_magic(FEAT_MAGIC)
    out = _read_features_payload(r)
    r.expect_eof()
    return out


def write_features_corpus(
    items: Sequence[Sequence[TokenFeatures]], width: int
) -> bytes:
    out = [FEAT_CORPUS_MAGIC, bytes([_VERSION]), _u32([len(items)])]
    out.extend(_features_payload(f, width) for f in items)
    return b"".join(out)


def read_features_corpus(data: bytes) -> list[list[TokenFeatures]]:
    r = _Reader(data, "feature corpus")
    r.expect_magic(FEAT_CORPUS_MAGIC)
    r.expect_version()
    count = r.u32()
    items = [_read_features_payload(r) for _ in range(count)]
    r.expect_eof()
    return items


def write_codebook(codebook: Codebook) -> bytes:
    head = CODEBOOK_MAGIC + bytes([_VERSION])
    head += _u32([codebook.size, codebook.dim])
    return head + np.asarray(codebook.vectors, dtype="<f4").tobytes()


def read_codebook(data: bytes) -> Codebook:
    r = _Reader(data, "codebook file")
    r.expect_magic(CODEBOOK_MAGIC)
    r.expect_version()
    count = r.u32()
    dim = r.u32()
    vectors = r.f32_array(count * dim).astype(np.float64).reshape(count, dim)
    r.expect_eof()
    return Codebook(vectors)


def write_collapse_map(cmap: CollapseMap) -> bytes:
    doc = {
        "k": cmap.k,
        "assign": cmap.assign.tolist(),
        "centers": cmap.centers.tolist(),
    }
    return (json.dumps(doc) + "\n").encode("utf-8")


def read_collapse_map(data: bytes) -> CollapseMap:
    try:
        doc = json.loads(data.decode("utf-8"))
        return CollapseMap(
            k=int(doc["k"]),
            centers=np.array(doc["centers"], dtype=np.float64),
            assign=np.array(doc["assign"], dtype=np.int32),
        )
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed collapse map: {exc}") from exc


def read_grids_any(data: bytes) -> list[TokenGrid]:
    """Accept a single MDTG grid or an MDTC corpus."""
    if data[:4] == GRID_MAGIC:
        return [read_grid(data)]
    return read_grid_corpus(data)


def read_sequences_any(data: bytes) -> list[CompressedSequence]:
    """Accept a single MDSQ sequence or an MDSC corpus."""
    if data[:4] == SEQ_MAGIC:
        return [read_sequence(data)]
    return read_seq_corpus(data)
