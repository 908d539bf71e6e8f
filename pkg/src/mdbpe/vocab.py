"""Vocabularies: base class count plus ordered merge rules.

A merge rule fuses an ordered pair of token classes at a fixed anchor-offset
vector into a new class. The cell-offset shape of any class is derivable by
recursively expanding its rule; shapes are memoized per vocabulary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import VocabError

TokenShape = frozenset[tuple[int, ...]]

_VOCAB_FORMAT = "mdbpe-vocab"
_VOCAB_VERSION = 1


@dataclass(frozen=True, order=True)
class Constellation:
    """Ordered class pair plus the anchor offset vector (p.anchor - n.anchor)."""

    class_p: int
    class_n: int
    v_pn: tuple[int, ...]

    def __post_init__(self) -> None:
        if all(c == 0 for c in self.v_pn):
            raise VocabError("constellation offset vector must be non-zero")


@dataclass(frozen=True)
class MergeRule:
    new_class: int
    constellation: Constellation


@dataclass(frozen=True)
class Vocabulary:
    """Immutable after construction; shapes are cached on first derivation."""

    base_size: int
    ndim: int
    merges: tuple[MergeRule, ...] = ()
    _shapes: dict[int, tuple] = field(
        default_factory=dict, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        if self.base_size <= 0:
            raise VocabError(f"base_size must be positive, got {self.base_size}")
        if not 1 <= self.ndim <= 3:
            raise VocabError(f"ndim must be 1..3, got {self.ndim}")
        for i, rule in enumerate(self.merges):
            expected = self.base_size + i
            if rule.new_class != expected:
                raise VocabError(
                    f"rule {i} must create class {expected}, got {rule.new_class}"
                )
            c = rule.constellation
            if len(c.v_pn) != self.ndim:
                raise VocabError(
                    f"rule {i}: offset vector has {len(c.v_pn)} components, "
                    f"expected {self.ndim}"
                )
            if not (0 <= c.class_p < expected and 0 <= c.class_n < expected):
                raise VocabError(
                    f"rule {i} references classes {c.class_p},{c.class_n} "
                    f"not below its own new class {expected}"
                )

    @property
    def size(self) -> int:
        return self.base_size + len(self.merges)

    @property
    def end_class(self) -> int:
        """Reserved end-of-sequence / padding class; never produced by training."""
        return self.size

    def with_rule(self, constellation: Constellation) -> "Vocabulary":
        rule = MergeRule(self.size, constellation)
        return Vocabulary(self.base_size, self.ndim, self.merges + (rule,))


def _expand(vocab: Vocabulary, token_class: int) -> tuple:
    """Sorted (offset, base class) pairs for a class, anchored at zero.

    Base classes are single cells. A merged class is the union of its p cells
    with its n cells translated by -v_pn, re-anchored so the scan-minimal
    offset is the zero vector.
    """
    cached = vocab._shapes.get(token_class)
    if cached is not None:
        return cached
    if token_class < vocab.base_size:
        cells = (((0,) * vocab.ndim, token_class),)
    else:
        rule = vocab.merges[token_class - vocab.base_size]
        c = rule.constellation
        merged = dict(_expand(vocab, c.class_p))
        for off, base in _expand(vocab, c.class_n):
            shifted = tuple(o - v for o, v in zip(off, c.v_pn))
            if shifted in merged:
                raise VocabError(
                    f"rule for class {token_class} double-covers cells "
                    f"(p={c.class_p}, n={c.class_n}, v_pn={c.v_pn})"
                )
            merged[shifted] = base
        origin = min(merged)
        cells = tuple(
            sorted(
                (tuple(o - a for o, a in zip(off, origin)), base)
                for off, base in merged.items()
            )
        )
    vocab._shapes[token_class] = cells
    return cells


def shape_of(vocab: Vocabulary, token_class: int) -> TokenShape:
    """Cell offsets of a class relative to its anchor (zero offset included)."""
    if not 0 <= token_class < vocab.size:
        raise VocabError(
            f"class {token_class} out of range for vocabulary of size {vocab.size}"
        )
    return frozenset(off for off, _ in _expand(vocab, token_class))


def base_cells(vocab: Vocabulary, token_class: int) -> tuple:
    """Sorted (offset, base class) pairs: the class expanded to its base
    constituents, offsets relative to the anchor."""
    if not 0 <= token_class < vocab.size:
        raise VocabError(
            f"class {token_class} out of range for vocabulary of size {vocab.size}"
        )
    return _expand(vocab, token_class)


def cell_count(vocab: Vocabulary, token_class: int) -> int:
    return len(shape_of(vocab, token_class))


def _shape_is_connected(shape: TokenShape) -> bool:
    cells = set(shape)
    start = next(iter(cells))
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        for k in range(len(cur)):
            for d in (-1, 1):
                nb = cur[:k] + (cur[k] + d,) + cur[k + 1 :]
                if nb in cells and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    return len(seen) == len(cells)


def validate_shapes(vocab: Vocabulary) -> None:
    """Derive every shape eagerly; reject overlap or disconnection.

    Training can never produce either defect, but a hand-edited document can.
    """
    for cls in range(vocab.base_size, vocab.size):
        shape = shape_of(vocab, cls)
        if (0,) * vocab.ndim not in shape:
            raise VocabError(f"shape of class {cls} lacks the zero offset")
        if min(shape) != (0,) * vocab.ndim:
            raise VocabError(f"shape of class {cls} is not anchored at its minimum")
        if not _shape_is_connected(shape):
            raise VocabError(f"shape of class {cls} is not edge-connected")


def write_vocab(vocab: Vocabulary) -> bytes:
    doc = {
        "format": _VOCAB_FORMAT,
        "version": _VOCAB_VERSION,
        "ndim": vocab.ndim,
        "base_size": vocab.base_size,
        "merges": [
            {
                "new_class": r.new_class,
                "class_p": r.constellation.class_p,
                "class_n": r.constellation.class_n,
                "v_pn": list(r.constellation.v_pn),
            }
            for r in vocab.merges
        ],
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def read_vocab(data: bytes) -> Vocabulary:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise VocabError(f"not a vocabulary document: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != _VOCAB_FORMAT:
        raise VocabError("missing or wrong format marker")
    if doc.get("version") != _VOCAB_VERSION:
        raise VocabError(f"unsupported vocabulary version {doc.get('version')!r}")
    try:
        ndim = int(doc["ndim"])
        base_size = int(doc["base_size"])
        merges = []
        for entry in doc["merges"]:
            merges.append(
                MergeRule(
                    new_class=int(entry["new_class"]),
                    constellation=Constellation(
                        class_p=int(entry["class_p"]),
                        class_n=int(entry["class_n"]),
                        v_pn=tuple(int(x) for x in entry["v_pn"]),
                    ),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise VocabError(f"malformed vocabulary document: {exc}") from exc
    vocab = Vocabulary(base_size, ndim, tuple(merges))
    validate_shapes(vocab)
    return vocab


def save_vocab(vocab: Vocabulary, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_vocab(vocab))


def load_vocab(path) -> Vocabulary:
    with open(path, "rb") as fh:
        return read_vocab(fh.read())
