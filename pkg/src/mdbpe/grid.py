"""n-dimensional token grids with per-cell class and instance-ID labels.

A grid cell carries two labels: the token class (what kind of token covers
the cell) and the unique instance ID (which concrete token instance the cell
belongs to). Cells of one instance are edge-connected and share one class.
Storage is flat row-major with the last axis fastest; that flat order is the
canonical scan order, and the anchor of an instance is its scan-minimal cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import GridError

GridPosition = tuple[int, ...]

MAX_AXES = 3


def _check_dims(dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not 1 <= len(dims) <= MAX_AXES:
        raise GridError(f"grids must have 1 to {MAX_AXES} axes, got {len(dims)}")
    if any(d <= 0 for d in dims):
        raise GridError(f"grid extents must be positive, got {dims}")
    return dims


def strides_of(dims: Sequence[int]) -> tuple[int, ...]:
    """Row-major strides (last axis fastest) for flattening positions."""
    out = [1] * len(dims)
    for k in range(len(dims) - 2, -1, -1):
        out[k] = out[k + 1] * dims[k + 1]
    return tuple(out)


def flat_index(position: Sequence[int], dims: Sequence[int]) -> int:
    return int(np.dot(position, strides_of(dims)))


def unflatten(flat: int, dims: Sequence[int]) -> GridPosition:
    coords = []
    for s in strides_of(dims):
        coords.append(flat // s)
        flat %= s
    return tuple(int(c) for c in coords)


def scan_order(dims: Sequence[int]) -> Iterator[GridPosition]:
    """Positions in canonical scan order: first axis slowest, last fastest.

    For 2D (row, col) this is top-to-bottom, left-to-right.
    """
    dims = _check_dims(dims)
    for flat in range(int(np.prod(dims))):
        yield unflatten(flat, dims)


@dataclass(eq=False)
class TokenGrid:
    """Flat row-major grid of (class, instance ID) cell labels.

    Value-semantic: ``copy()`` yields an independent grid. ``ids`` values are
    non-negative but need not be dense after merges.
    """

    dims: tuple[int, ...]
    classes: np.ndarray
    ids: np.ndarray

    def __post_init__(self) -> None:
        self.dims = _check_dims(self.dims)
        n = self.n_cells
        self.classes = np.ascontiguousarray(self.classes, dtype=np.int32)
        self.ids = np.ascontiguousarray(self.ids, dtype=np.int32)
        if self.classes.shape != (n,):
            raise GridError(f"expected {n} class entries, got {self.classes.shape}")
        if self.ids.shape != (n,):
            raise GridError(f"expected {n} id entries, got {self.ids.shape}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_instances(self) -> int:
        return int(np.unique(self.ids).size)

    def copy(self) -> "TokenGrid":
        return TokenGrid(self.dims, self.classes.copy(), self.ids.copy())

    def class_grid(self) -> np.ndarray:
        """Per-cell classes reshaped to ``dims``."""
        return self.classes.reshape(self.dims)

    def same_classes(self, other: "TokenGrid") -> bool:
        """Equality on per-cell classes; instance IDs are not compared."""
        return self.dims == other.dims and bool(
            np.array_equal(self.classes, other.classes)
        )

    def instance_cells(self, instance_id: int) -> np.ndarray:
        """Sorted flat cell indices of one instance."""
        cells = np.flatnonzero(self.ids == instance_id)
        if cells.size == 0:
            raise GridError(f"unknown instance id {instance_id}")
        return cells

    def validate(self) -> None:
        """Check the full grid invariants; raises GridError on violation.

        Not run on construction: connectivity is O(cells) and hot paths only
        ever build grids that satisfy it by construction.
        """
        if np.any(self.classes < 0) or np.any(self.ids < 0):
            raise GridError("classes and ids must be non-negative")
        order = np.argsort(self.ids, kind="stable")
        ids_sorted = self.ids[order]
        boundaries = np.flatnonzero(np.diff(ids_sorted)) + 1
        groups = np.split(order, boundaries)
        strides = strides_of(self.dims)
        for cells in groups:
            if np.unique(self.classes[cells]).size != 1:
                raise GridError(
                    f"instance {int(self.ids[cells[0]])} mixes token classes"
                )
            if not _is_connected(set(int(c) for c in cells), self.dims, strides):
                raise GridError(
                    f"instance {int(self.ids[cells[0]])} is not edge-connected"
                )


def _is_connected(cells: set[int], dims: Sequence[int], strides: Sequence[int]) -> bool:
    start = next(iter(cells))
    seen = {start}
    stack = [start]
    while stack:
        c = stack.pop()
        coords = unflatten(c, dims)
        for k, s in enumerate(strides):
            for delta, edge in ((1, dims[k] - 1), (-1, 0)):
                if coords[k] == edge:
                    continue
                nb = c + delta * s
                if nb in cells and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    return len(seen) == len(cells)


def from_classes(
    dims: Sequence[int],
    classes: Sequence[int] | np.ndarray,
    base_size: int | None = None,
) -> TokenGrid:
    """Build an uncompressed grid: every cell its own single-cell instance.

    Instance IDs are assigned densely in scan order. When ``base_size`` is
    given, classes are range-checked against it.
    """
    dims = _check_dims(dims)
    n = int(np.prod(dims))
    cls = np.ascontiguousarray(classes, dtype=np.int32).ravel()
    if cls.size != n:
        raise GridError(f"expected {n} classes for dims {dims}, got {cls.size}")
    if np.any(cls < 0):
        raise GridError("token classes must be non-negative")
    if base_size is not None and np.any(cls >= base_size):
        bad = int(cls[cls >= base_size][0])
        raise GridError(f"class {bad} out of range for base vocabulary {base_size}")
    return TokenGrid(dims, cls, np.arange(n, dtype=np.int32))


def anchor_of(grid: TokenGrid, instance_id: int) -> GridPosition:
    """Anchor of an instance: its scan-minimal cell."""
    cells = grid.instance_cells(instance_id)
    return unflatten(int(cells[0]), grid.dims)


def instance_anchors(grid: TokenGrid) -> dict[int, int]:
    """Flat anchor cell per instance ID, for all instances."""
    first = {}
    for flat, iid in enumerate(grid.ids):
        iid = int(iid)
        if iid not in first:
            first[iid] = flat
    return first
