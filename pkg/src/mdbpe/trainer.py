"""Count/replace training loop over a corpus of token grids.

Each iteration counts constellations of adjacent instance pairs across the
corpus, picks the most frequent one, and replaces every live occurrence with
a new token class. Counting first-occurrence-dedupes ordered instance-ID
pairs per grid; replacement is one greedy scan per grid against live state.

The corpus is packed once into flat segment arrays (see _kernels) and stays
packed across all iterations; TokenGrids are only rebuilt at the end.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import GridError, MdbpeError, VocabError
from .grid import TokenGrid, strides_of
from .vocab import Constellation, MergeRule, Vocabulary

CountTable = dict[Constellation, int]


@dataclass
class TrainConfig:
    """extra_tokens: number of new tokens to create (merge rules).

    neighbor_axes restricts which axes contribute the +1 neighbor direction;
    None enables all axes.
    """

    extra_tokens: int
    neighbor_axes: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.extra_tokens < 0:
            raise MdbpeError("extra_tokens must be >= 0")


@dataclass
class MergeEvent:
    rule: MergeRule
    count: int
    merges_applied: int
    instances_total: int


@dataclass
class TrainResult:
    vocab: Vocabulary
    grids: list[TokenGrid]
    history: list[MergeEvent]


def _next_pow2(n: int) -> int:
    return 1 << max(4, int(n - 1).bit_length())


def _axes_array(ndim: int, neighbor_axes: tuple[int, ...] | None) -> np.ndarray:
    if neighbor_axes is None:
        return np.ones(ndim, dtype=np.bool_)
    axes = np.zeros(ndim, dtype=np.bool_)
    for a in neighbor_axes:
        if not 0 <= a < ndim:
            raise MdbpeError(f"neighbor axis {a} out of range for {ndim} axes")
        axes[a] = True
    return axes


class _Segments:
    """One chunk of grids packed into flat arrays."""

    __slots__ = (
        "offsets",
        "dims_table",
        "strides_table",
        "ids",
        "id_class",
        "anchor",
        "head",
        "nxt",
        "tail",
        "orig_ids",
        "max_slots",
    )

    def __init__(self, grids: Sequence[TokenGrid], class_limit: int) -> None:
        ndim = grids[0].ndim
        sizes = [g.n_cells for g in grids]
        self.offsets = np.zeros(len(grids) + 1, dtype=np.int64)
        np.cumsum(sizes, out=self.offsets[1:])
        total = int(self.offsets[-1])
        self.dims_table = np.array([g.dims for g in grids], dtype=np.int64)
        self.strides_table = np.array(
            [strides_of(g.dims) for g in grids], dtype=np.int64
        )
        self.ids = np.empty(total, dtype=np.int32)
        self.id_class = np.zeros(total, dtype=np.int32)
        self.anchor = np.zeros(total, dtype=np.int32)
        self.head = np.full(total, -1, dtype=np.int32)
        self.nxt = np.full(total, -1, dtype=np.int32)
        self.tail = np.full(total, -1, dtype=np.int32)
        self.orig_ids: list[np.ndarray] = []
        self.max_slots = 0

        for gi, grid in enumerate(grids):
            base = int(self.offsets[gi])
            n = grid.n_cells
            cls = grid.classes
            if cls.size and int(cls.max()) >= class_limit:
                raise VocabError(
                    f"grid {gi}: class {int(cls.max())} out of range "
                    f"(vocabulary size {class_limit})"
                )
            slots = sum(
                (n // d) * (d - 1) for d in grid.dims
            )
            self.max_slots = max(self.max_slots, slots)

            seg = slice(base, base + n)
            arange = np.arange(n, dtype=np.int32)
            if n and grid.ids[0] == 0 and np.array_equal(grid.ids, arange):
                # fresh grid: every cell its own instance
                self.ids[seg] = arange
                self.id_class[seg] = cls
                self.anchor[seg] = arange
                self.head[seg] = arange
                self.tail[seg] = arange
                self.orig_ids.append(arange)
                continue
            uniq, first_idx, inverse = np.unique(
                grid.ids, return_index=True, return_inverse=True
            )
            inverse = inverse.astype(np.int32)
            if not np.array_equal(cls[first_idx][inverse], cls):
                raise GridError(f"grid {gi}: instance mixes token classes")
            n_inst = uniq.size
            self.ids[seg] = inverse
            self.id_class[base : base + n_inst] = cls[first_idx]
            self.anchor[base : base + n_inst] = first_idx
            order = np.argsort(inverse, kind="stable").astype(np.int32)
            counts = np.bincount(inverse, minlength=n_inst)
            ends = np.cumsum(counts)
            starts = ends - counts
            self.head[base : base + n_inst] = order[starts]
            self.tail[base : base + n_inst] = order[ends - 1]
            nxt_local = np.full(n, -1, dtype=np.int32)
            nxt_local[order[:-1]] = order[1:]
            nxt_local[order[ends - 1]] = -1
            self.nxt[seg] = nxt_local
            self.orig_ids.append(uniq.astype(np.int32))

    @property
    def n_grids(self) -> int:
        return self.offsets.shape[0] - 1

    def unpack(self) -> list[TokenGrid]:
        out = []
        for gi in range(self.n_grids):
            base = int(self.offsets[gi])
            end = int(self.offsets[gi + 1])
            local = self.ids[base:end]
            classes = self.id_class[base:end][local]
            ids = self.orig_ids[gi][local]
            out.append(
                TokenGrid(tuple(self.dims_table[gi]), classes.copy(), ids.copy())
            )
        return out


@dataclass
class _Packing:
    """Bit layout for packed constellation keys; numeric order == tuple order."""

    ndim: int
    cls_bits: int
    v_bits: np.ndarray
    v_offs: np.ndarray

    @classmethod
    def for_corpus(cls, grids: Sequence[TokenGrid], class_limit: int) -> "_Packing":
        ndim = grids[0].ndim
        max_dims = [max(g.dims[k] for g in grids) for k in range(ndim)]
        cls_bits = max(1, int(class_limit - 1).bit_length())
        v_bits = np.array(
            [max(1, int(2 * d - 2).bit_length()) for d in max_dims], dtype=np.int64
        )
        v_offs = np.array([d - 1 for d in max_dims], dtype=np.int64)
        total = 2 * cls_bits + int(v_bits.sum())
        if total > 62:
            raise MdbpeError(
                f"vocabulary and grid extents need {total} key bits (max 62)"
            )
        return cls(ndim, cls_bits, v_bits, v_offs)

    @property
    def v_total_bits(self) -> int:
        return int(self.v_bits.sum())

    def unit_v_packed(self) -> np.ndarray:
        """Pre-packed offset fields for v = -unit(axis), one entry per axis."""
        out = np.zeros(self.ndim, dtype=np.int64)
        for k in range(self.ndim):
            key = 0
            for ax in range(self.ndim):
                v = -1 if ax == k else 0
                key = (key << int(self.v_bits[ax])) | (v + int(self.v_offs[ax]))
            out[k] = key
        return out

    def pack_rule(self, c: Constellation) -> int:
        key = (c.class_p << self.cls_bits) | c.class_n
        for k in range(self.ndim):
            key = (key << int(self.v_bits[k])) | (c.v_pn[k] + int(self.v_offs[k]))
        return key

    def unpack_key(self, key: int) -> Constellation:
        v = []
        for k in range(self.ndim - 1, -1, -1):
            bits = int(self.v_bits[k])
            v.append((key & ((1 << bits) - 1)) - int(self.v_offs[k]))
            key >>= bits
        class_n = key & ((1 << self.cls_bits) - 1)
        class_p = key >> self.cls_bits
        return Constellation(int(class_p), int(class_n), tuple(reversed(v)))


class _Worker:
    """Per-thread scratch: stamped pair-dedup table and constellation table."""

    def __init__(self, max_slots: int) -> None:
        size = _next_pow2(2 * max_slots + 16)
        self.pair_keys = np.full(size, -1, dtype=np.int64)
        self.pair_stamp = np.zeros(size, dtype=np.int64)
        self.epoch = 0
        self.tab_keys = np.full(1 << 16, -1, dtype=np.int64)
        self.tab_vals = np.zeros(1 << 16, dtype=np.int64)

    def count(
        self, chunks: list[_Segments], axes: np.ndarray, packing: _Packing
    ) -> tuple[np.ndarray, np.ndarray, int]:
        unit_v = packing.unit_v_packed()
        while True:
            self.tab_keys.fill(-1)
            used = 0
            visits = 0
            overflow = 0
            for seg in chunks:
                v, used, overflow = _kernels.count_pass(
                    seg.offsets,
                    seg.dims_table,
                    seg.strides_table,
                    axes,
                    seg.ids,
                    seg.id_class,
                    seg.anchor,
                    seg.nxt,
                    self.pair_keys,
                    self.pair_stamp,
                    self.epoch,
                    self.tab_keys,
                    self.tab_vals,
                    used,
                    packing.cls_bits,
                    packing.v_bits,
                    packing.v_offs,
                    unit_v,
                    packing.v_total_bits,
                )
                self.epoch += seg.n_grids
                visits += int(v)
                if overflow:
                    break
            if not overflow:
                mask = self.tab_keys != -1
                return self.tab_keys[mask], self.tab_vals[mask], visits
            grown = self.tab_keys.shape[0] * 4
            self.tab_keys = np.full(grown, -1, dtype=np.int64)
            self.tab_vals = np.zeros(grown, dtype=np.int64)


class _PackedCorpus:
    def __init__(
        self,
        grids: Sequence[TokenGrid],
        class_limit: int,
        neighbor_axes: tuple[int, ...] | None,
        threads: int,
        chunk_grids: int = 512,
    ) -> None:
        if not grids:
            raise MdbpeError("corpus is empty")
        ndim = grids[0].ndim
        if any(g.ndim != ndim for g in grids):
            raise GridError("corpus mixes grids of different dimensionality")
        self.ndim = ndim
        self.axes = _axes_array(ndim, neighbor_axes)
        self.packing = _Packing.for_corpus(grids, class_limit)
        self.chunks = [
            _Segments(grids[i : i + chunk_grids], class_limit)
            for i in range(0, len(grids), chunk_grids)
        ]
        self.total_cells = sum(int(s.offsets[-1]) for s in self.chunks)
        self.total_instances = sum(len(o) for s in self.chunks for o in s.orig_ids)
        max_slots = max(s.max_slots for s in self.chunks)
        self.threads = max(1, threads)
        self.workers = [_Worker(max_slots) for _ in range(self.threads)]
        self.pool = (
            ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None
        )

    def close(self) -> None:
        if self.pool is not None:
            self.pool.shutdown()

    def count(self) -> tuple[np.ndarray, np.ndarray, int]:
        """Merged (keys, counts) over the corpus plus total pair visits."""
        parts = []
        if self.pool is None:
            parts.append(self.workers[0].count(self.chunks, self.axes, self.packing))
        else:
            futures = [
                self.pool.submit(w.count, self.chunks[i :: self.threads],
                                 self.axes, self.packing)
                for i, w in enumerate(self.workers)
                if self.chunks[i :: self.threads]
            ]
            parts = [f.result() for f in futures]
        visits = sum(p[2] for p in parts)
        keys = np.concatenate([p[0] for p in parts])
        vals = np.concatenate([p[1] for p in parts])
        if len(parts) > 1 and keys.size:
            uniq, inverse = np.unique(keys, return_inverse=True)
            sums = np.zeros(uniq.size, dtype=np.int64)
            np.add.at(sums, inverse, vals)
            keys, vals = uniq, sums
        return keys, vals, visits

    def replace(self, rule: MergeRule) -> int:
        c = rule.constellation
        rule_v = np.array(c.v_pn, dtype=np.int64)
        args = (c.class_p, c.class_n, rule_v, rule.new_class)

        def run(seg: _Segments) -> int:
            return int(
                _kernels.replace_pass(
                    seg.offsets,
                    seg.dims_table,
                    seg.strides_table,
                    self.axes,
                    seg.ids,
                    seg.id_class,
                    seg.anchor,
                    seg.head,
                    seg.nxt,
                    seg.tail,
                    *args,
                )
            )

        if self.pool is None:
            merged = sum(run(seg) for seg in self.chunks)
        else:
            merged = sum(self.pool.map(run, self.chunks))
        self.total_instances -= merged
        return merged

    def unpack(self) -> list[TokenGrid]:
        out: list[TokenGrid] = []
        for seg in self.chunks:
            out.extend(seg.unpack())
        return out


def count_constellations(
    corpus: Sequence[TokenGrid],
    vocab: Vocabulary,
    neighbor_axes: tuple[int, ...] | None = None,
    return_visits: bool = False,
):
    """Constellation -> occurrence count over the corpus.

    Per grid, an ordered instance pair contributes at most once; all slots of
    the same pair share one constellation, so any representative is exact.
    """
    packed = _PackedCorpus(corpus, vocab.size, neighbor_axes, threads=1)
    try:
        keys, vals, visits = packed.count()
    finally:
        packed.close()
    table = {
        packed.packing.unpack_key(int(k)): int(v) for k, v in zip(keys, vals)
    }
    if return_visits:
        return table, visits
    return table


def select_merge(table: CountTable) -> Constellation | None:
    """Most frequent constellation; ties to the lexicographically smallest.

    Returns None when no constellation occurs more than once (a merge used
    once per corpus adds vocabulary without shortening anything).
    """
    if not table:
        return None
    best_count = max(table.values())
    if best_count <= 1:
        return None
    return min(c for c, n in table.items() if n == best_count)


def apply_merge(
    grid: TokenGrid,
    rule: MergeRule,
    neighbor_axes: tuple[int, ...] | None = None,
) -> tuple[TokenGrid, int]:
    """Apply one rule to one grid (value-semantic); returns (grid, merges)."""
    c = rule.constellation
    if not (0 <= c.class_p < rule.new_class and 0 <= c.class_n < rule.new_class):
        raise VocabError("rule references classes not below its new class")
    packed = _PackedCorpus([grid], rule.new_class + 1, neighbor_axes, threads=1)
    merged = packed.replace(rule)
    out = packed.unpack()[0]
    packed.close()
    return out, merged


def apply_rules(
    corpus: Sequence[TokenGrid],
    vocab: Vocabulary,
    neighbor_axes: tuple[int, ...] | None = None,
    threads: int = 1,
) -> list[TokenGrid]:
    """Compress a corpus by replaying the vocabulary's rules in order.

    This is how held-out data is brought into a trained vocabulary; replaying
    on already-compressed grids is a no-op.
    """
    packed = _PackedCorpus(corpus, vocab.size, neighbor_axes, threads)
    try:
        for rule in vocab.merges:
            packed.replace(rule)
        return packed.unpack()
    finally:
        packed.close()


def train(
    corpus: Sequence[TokenGrid],
    base_size: int,
    config: TrainConfig,
    threads: int = 1,
    progress: Callable[[MergeEvent], None] | None = None,
) -> TrainResult:
    """Alternate count and replace until extra_tokens rules exist or no
    constellation occurs more than once. Deterministic given input order;
    thread count never changes the result (counts merge by addition and
    selection orders keys canonically).
    """
    if not corpus:
        raise MdbpeError("corpus is empty")
    ndim = corpus[0].ndim
    class_limit = base_size + config.extra_tokens
    packed = _PackedCorpus(
        corpus, max(base_size, 1), config.neighbor_axes, threads
    )
    # widen key layout up-front so it stays fixed while the vocabulary grows
    packed.packing = _Packing.for_corpus(corpus, max(class_limit, base_size))

    vocab = Vocabulary(base_size, ndim)
    history: list[MergeEvent] = []
    try:
        for _ in range(config.extra_tokens):
            keys, vals, _ = packed.count()
            if keys.size == 0:
                break
            best = int(vals.max())
            if best <= 1:
                break
            key = int(keys[vals == best].min())
            constellation = packed.packing.unpack_key(key)
            rule = MergeRule(vocab.size, constellation)
            merged = packed.replace(rule)
            vocab = vocab.with_rule(constellation)
            event = MergeEvent(rule, best, merged, packed.total_instances)
            history.append(event)
            if progress is not None:
                progress(event)
        return TrainResult(vocab, packed.unpack(), history)
    finally:
        packed.close()
