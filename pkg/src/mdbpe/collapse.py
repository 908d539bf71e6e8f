"""Lossy codebook collapse: cluster token embeddings, snap classes to the
nearest cluster, and prune the corpus tail by compressed length.

Collapsing before training unifies near-interchangeable classes so the
count/replace loop finds far more repetition to compress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import MdbpeError
from .grid import TokenGrid, from_classes


@dataclass
class Codebook:
    """Real-valued embedding per token class (row index = class)."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] == 0:
            raise MdbpeError("codebook must be a non-empty 2D array")
        if not np.all(np.isfinite(self.vectors)):
            raise MdbpeError("codebook contains non-finite entries")

    @property
    def size(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


@dataclass
class CollapseMap:
    """k cluster centers plus the class -> collapsed-class assignment."""

    k: int
    centers: np.ndarray
    assign: np.ndarray

    def __post_init__(self) -> None:
        self.centers = np.ascontiguousarray(self.centers, dtype=np.float64)
        self.assign = np.ascontiguousarray(self.assign, dtype=np.int32)
        if self.centers.shape[0] != self.k:
            raise MdbpeError("center count does not match k")
        if self.assign.size and (
            self.assign.min() < 0 or self.assign.max() >= self.k
        ):
            raise MdbpeError("assignment targets outside [0, k)")


def _pairwise_sq(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def farthest_point_sample(codebook: Codebook, k: int) -> np.ndarray:
    """k seed indices: start farthest from the mean, then repeatedly take the
    vector maximizing the minimum distance to the chosen set. Ties go to the
    lowest index, so the result is deterministic."""
    if not 1 <= k <= codebook.size:
        raise MdbpeError(f"k must be in [1, {codebook.size}], got {k}")
    vectors = codebook.vectors
    mean = vectors.mean(axis=0)
    dist = np.linalg.norm(vectors - mean, axis=1)
    seeds = [int(np.argmax(dist))]
    min_d = np.linalg.norm(vectors - vectors[seeds[0]], axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(min_d))
        seeds.append(nxt)
        min_d = np.minimum(min_d, np.linalg.norm(vectors - vectors[nxt], axis=1))
    return np.array(seeds, dtype=np.int64)


def kmeans_refine(
    codebook: Codebook,
    seeds: np.ndarray,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> np.ndarray:
    """Lloyd iterations from the seed vectors until the largest center shift
    drops below tol or max_iters is hit. Emptied clusters keep their previous
    center. max_iters=0 returns the seed vectors unchanged."""
    vectors = codebook.vectors
    centers = vectors[np.asarray(seeds, dtype=np.int64)].copy()
    for _ in range(max_iters):
        assign = np.argmin(_pairwise_sq(vectors, centers), axis=1)
        new_centers = centers.copy()
        for j in range(centers.shape[0]):
            members = vectors[assign == j]
            if members.shape[0]:
                new_centers[j] = members.mean(axis=0)
        shift = float(np.linalg.norm(new_centers - centers, axis=1).max())
        centers = new_centers
        if shift < tol:
            break
    return centers


def build_collapse_map(codebook: Codebook, centers: np.ndarray) -> CollapseMap:
    assign = np.argmin(_pairwise_sq(codebook.vectors, centers), axis=1)
    return CollapseMap(
        k=int(centers.shape[0]),
        centers=np.asarray(centers, dtype=np.float64),
        assign=assign.astype(np.int32),
    )


def collapse_codebook(
    codebook: Codebook, k: int, max_iters: int = 100, tol: float = 1e-6
) -> CollapseMap:
    """Farthest point sampling, k-means refinement, nearest-center assignment."""
    seeds = farthest_point_sample(codebook, k)
    centers = kmeans_refine(codebook, seeds, max_iters, tol)
    return build_collapse_map(codebook, centers)


def snap(corpus: Sequence[TokenGrid], cmap: CollapseMap) -> list[TokenGrid]:
    """Map every cell class through the assignment; instance IDs reset to
    single cells because snapping precedes compression training."""
    out = []
    for grid in corpus:
        if grid.classes.size and int(grid.classes.max()) >= cmap.assign.size:
            raise MdbpeError(
                f"grid class {int(grid.classes.max())} outside the collapse map"
            )
        out.append(from_classes(grid.dims, cmap.assign[grid.classes]))
    return out


def prune_indices(lengths: Sequence[int], fraction: float) -> list[int]:
    """Indices kept after dropping the ceil(fraction*N) longest entries.

    Length ties are broken by dropping later indices first.
    """
    if not 0 <= fraction < 1:
        raise MdbpeError(f"fraction must be in [0, 1), got {fraction}")
    n = len(lengths)
    drop = math.ceil(fraction * n)
    if drop == 0:
        return list(range(n))
    by_length = sorted(range(n), key=lambda i: (-int(lengths[i]), -i))
    dropped = set(by_length[:drop])
    return [i for i in range(n) if i not in dropped]


def prune(items: Sequence, lengths: Sequence[int], fraction: float) -> list:
    """Drop the fraction of items with the longest compressed lengths; the
    rest come back in their original order."""
    if len(items) != len(lengths):
        raise MdbpeError("items and lengths differ in size")
    keep = prune_indices(lengths, fraction)
    return [items[i] for i in keep]
