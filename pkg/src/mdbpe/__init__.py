"""Multidimensional byte pair encoding for n-dimensional token grids.

Trains merge rules by counting constellations of adjacent token instances
and replacing the most frequent one, compresses grids into variable-length
sequences losslessly, and provides the surrounding machinery: positional
and shape feature emission, generation legality masks, codebook collapse,
and corpus pruning.
"""

from .codec import (
    CompressedSequence,
    CompressionReport,
    compression_stats,
    decode,
    decode_to_base,
    encode,
)
from .collapse import (
    Codebook,
    CollapseMap,
    build_collapse_map,
    collapse_codebook,
    farthest_point_sample,
    kmeans_refine,
    prune,
    prune_indices,
    snap,
)
from .errors import (
    DecodeBoundsError,
    DecodeError,
    DecodeOverlapError,
    DecodeOverrunError,
    DecodeUnderrunError,
    FormatError,
    GridError,
    MdbpeError,
    VocabError,
)
from .grid import TokenGrid, anchor_of, from_classes, scan_order
from .ingest import (
    greyscale_to_grid,
    quantize_color_to_grid,
    raw_indices_to_grid,
    read_pgm,
    read_ppm,
    read_voxels,
    voxels_to_grid,
    write_voxels,
)
from .seqfeat import (
    GenerationState,
    PositionalEncodingTable,
    TokenFeatures,
    emit_features,
    ipe,
    legal_mask,
)
from .trainer import (
    CountTable,
    MergeEvent,
    TrainConfig,
    TrainResult,
    apply_merge,
    apply_rules,
    count_constellations,
    select_merge,
    train,
)
from .vocab import (
    Constellation,
    MergeRule,
    TokenShape,
    Vocabulary,
    base_cells,
    cell_count,
    load_vocab,
    read_vocab,
    save_vocab,
    shape_of,
    write_vocab,
)

__version__ = "0.1.0"

__all__ = [
    "CompressedSequence",
    "CompressionReport",
    "compression_stats",
    "decode",
    "decode_to_base",
    "encode",
    "Codebook",
    "CollapseMap",
    "build_collapse_map",
    "collapse_codebook",
    "farthest_point_sample",
    "kmeans_refine",
    "prune",
    "prune_indices",
    "snap",
    "DecodeBoundsError",
    "DecodeError",
    "DecodeOverlapError",
    "DecodeOverrunError",
    "DecodeUnderrunError",
    "FormatError",
    "GridError",
    "MdbpeError",
    "VocabError",
    "TokenGrid",
    "anchor_of",
    "from_classes",
    "scan_order",
    "greyscale_to_grid",
    "quantize_color_to_grid",
    "raw_indices_to_grid",
    "read_pgm",
    "read_ppm",
    "read_voxels",
    "voxels_to_grid",
    "write_voxels",
    "GenerationState",
    "PositionalEncodingTable",
    "TokenFeatures",
    "emit_features",
    "ipe",
    "legal_mask",
    "CountTable",
    "MergeEvent",
    "TrainConfig",
    "TrainResult",
    "apply_merge",
    "apply_rules",
    "count_constellations",
    "select_merge",
    "train",
    "Constellation",
    "MergeRule",
    "TokenShape",
    "Vocabulary",
    "base_cells",
    "cell_count",
    "load_vocab",
    "read_vocab",
    "save_vocab",
    "shape_of",
    "write_vocab",
]
