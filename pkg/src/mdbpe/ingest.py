"""Adapters that turn raw inputs into token grids.

Greyscale images become 256-class grids, quantized-color images 1000-class
grids (one decimal digit per channel), occupancy volumes binary 3D grids,
and pre-tokenized index grids pass straight through. File-level inputs are
binary PGM/PPM images and the MDVX bit-packed voxel format.
"""

from __future__ import annotations

import io

import numpy as np

from .errors import FormatError, GridError
from .grid import TokenGrid, from_classes

GREYSCALE_BASE = 256
QUANTIZED_COLOR_BASE = 1000
VOXEL_BASE = 2

_COLOR_DIVISOR = 26

_MDVX_MAGIC = b"MDVX"
_MDVX_VERSION = 1


def greyscale_to_grid(pixels) -> TokenGrid:
    """Intensity 0..255 per pixel becomes the token class; base size 256."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise GridError(f"expected a 2D intensity array, got shape {arr.shape}")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() > 255:
        raise GridError("intensities must be in [0, 255]")
    return from_classes(arr.shape, arr.ravel(), base_size=GREYSCALE_BASE)


def quantize_color_to_grid(pixels) -> TokenGrid:
    """RGB quantized to one decimal digit per channel: class = R'G'B' where
    each channel is divided by 26; base size 1000."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise GridError(f"expected an HxWx3 RGB array, got shape {arr.shape}")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() > 255:
        raise GridError("channel values must be in [0, 255]")
    digits = arr // _COLOR_DIVISOR
    classes = digits[:, :, 0] * 100 + digits[:, :, 1] * 10 + digits[:, :, 2]
    return from_classes(
        arr.shape[:2], classes.ravel(), base_size=QUANTIZED_COLOR_BASE
    )


def voxels_to_grid(volume) -> TokenGrid:
    """Boolean occupancy volume (depth, height, width) as a binary 3D grid."""
    arr = np.asarray(volume)
    if arr.ndim != 3:
        raise GridError(f"expected a 3D occupancy array, got shape {arr.shape}")
    classes = (arr != 0).astype(np.int64)
    return from_classes(arr.shape, classes.ravel(), base_size=VOXEL_BASE)


def raw_indices_to_grid(dims, indices, base_size: int) -> TokenGrid:
    """Pass-through for externally tokenized index grids."""
    return from_classes(dims, np.asarray(indices).ravel(), base_size=base_size)


def _read_netpbm_header(stream: io.BufferedIOBase, magic: bytes) -> tuple[int, ...]:
    if stream.read(2) != magic:
        raise FormatError(f"not a {magic.decode()} file")
    fields = []
    while len(fields) < 3:
        ch = stream.read(1)
        if not ch:
            raise FormatError("truncated netpbm header")
        if ch.isspace():
            continue
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = stream.read(1)
            continue
        token = ch
        while True:
            ch = stream.read(1)
            if not ch or ch.isspace():
                break
            token += ch
        try:
            fields.append(int(token))
        except ValueError as exc:
            raise FormatError(f"bad netpbm header field {token!r}") from exc
    return tuple(fields)


def read_pgm(data: bytes) -> np.ndarray:
    """Binary PGM (P5) to an HxW uint8 intensity array."""
    stream = io.BytesIO(data)
    width, height, maxval = _read_netpbm_header(stream, b"P5")
    if not 0 < maxval <= 255:
        raise FormatError(f"unsupported PGM maxval {maxval}")
    raw = stream.read(width * height)
    if len(raw) != width * height:
        raise FormatError("truncated PGM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width)


def read_ppm(data: bytes) -> np.ndarray:
    """Binary PPM (P6) to an HxWx3 uint8 RGB array."""
    stream = io.BytesIO(data)
    width, height, maxval = _read_netpbm_header(stream, b"P6")
    if not 0 < maxval <= 255:
        raise FormatError(f"unsupported PPM maxval {maxval}")
    raw = stream.read(width * height * 3)
    if len(raw) != width * height * 3:
        raise FormatError("truncated PPM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)


def write_voxels(volume) -> bytes:
    """MDVX: magic, version, axis count, u32 dims, occupancy bit-packed in
    scan order (LSB-first within each byte)."""
    arr = np.asarray(volume)
    if arr.ndim != 3:
        raise GridError(f"expected a 3D occupancy array, got shape {arr.shape}")
    bits = (arr != 0).ravel().astype(np.uint8)
    packed = np.packbits(bits, bitorder="little")
    head = _MDVX_MAGIC + bytes([_MDVX_VERSION, 3])
    head += np.array(arr.shape, dtype="<u4").tobytes()
    return head + packed.tobytes()


def read_voxels(data: bytes) -> np.ndarray:
    if data[:4] != _MDVX_MAGIC:
        raise FormatError("not an MDVX voxel file")
    if len(data) < 6 or data[4] != _MDVX_VERSION:
        raise FormatError("unsupported MDVX version")
    ndim = data[5]
    if ndim != 3:
        raise FormatError(f"MDVX must have 3 axes, got {ndim}")
    head_end = 6 + 4 * ndim
    dims = np.frombuffer(data[6:head_end], dtype="<u4").astype(np.int64)
    n = int(dims.prod())
    n_bytes = (n + 7) // 8
    if len(data) != head_end + n_bytes:
        raise FormatError("MDVX payload size mismatch")
    bits = np.unpackbits(
        np.frombuffer(data[head_end:], dtype=np.uint8), bitorder="little"
    )[:n]
    return bits.reshape(tuple(dims)).astype(bool)
