"""Command-line surface: batch preprocessing with reproducible runs.

All subcommands are deterministic: identical inputs and flags produce
byte-identical outputs regardless of the thread count. Logs go to stderr;
``--json`` prints a machine-readable summary to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import codec, collapse, formats, report, trainer, vocab as vocab_mod
from .errors import MdbpeError

_ENV_THREADS = "MDBPE_THREADS"


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(summary: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(summary))


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(_ENV_THREADS, "1")))
    except ValueError:
        return 1


def _parse_axes(text: str | None) -> tuple[int, ...] | None:
    """Axis list like "0,1" or compact "01"; None means all axes."""
    if text is None:
        return None
    digits = text.replace(",", "").strip()
    if not digits or not digits.isdigit():
        raise MdbpeError(f"bad axes mask {text!r}; expected digits like 0,1")
    return tuple(dict.fromkeys(int(d) for d in digits))


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


def _cmd_train(args: argparse.Namespace) -> dict:
    grids = formats.read_grids_any(_read(args.corpus))
    base_size = args.base_size
    if base_size is None:
        base_size = max(int(g.classes.max()) for g in grids) + 1
        _log(f"base size inferred from corpus: {base_size}")
    total_cells = sum(g.n_cells for g in grids)
    config = trainer.TrainConfig(
        extra_tokens=args.extra_tokens,
        neighbor_axes=_parse_axes(args.axes),
    )

    def on_merge(event: trainer.MergeEvent) -> None:
        c = event.rule.constellation
        pct = 100.0 * event.instances_total / total_cells
        _log(
            f"merge {event.rule.new_class - base_size + 1:4d}: "
            f"({c.class_p}, {c.class_n}, {c.v_pn}) -> {event.rule.new_class}  "
            f"count={event.count}  applied={event.merges_applied}  "
            f"compression={pct:.2f}%"
        )

    started = time.perf_counter()
    result = trainer.train(
        grids, base_size, config, threads=args.threads, progress=on_merge
    )
    elapsed = time.perf_counter() - started
    vocab_mod.save_vocab(result.vocab, args.out)
    tokens = sum(g.n_instances for g in result.grids)
    _log(
        f"trained {len(result.vocab.merges)} rules over {len(grids)} grids "
        f"in {elapsed:.1f}s; training-set compression "
        f"{100.0 * tokens / total_cells:.2f}%"
    )
    return {
        "command": "train",
        "grids": len(grids),
        "base_size": base_size,
        "rules": len(result.vocab.merges),
        "training_compression_percent": 100.0 * tokens / total_cells,
        "seconds": elapsed,
        "out": str(args.out),
    }


def _cmd_encode(args: argparse.Namespace) -> dict:
    vocab = vocab_mod.load_vocab(args.vocab)
    grids = formats.read_grids_any(_read(args.in_path))
    compressed = trainer.apply_rules(grids, vocab, threads=args.threads)
    seqs = [codec.encode(g, vocab, validate=False) for g in compressed]
    if args.verify:
        for i, (seq, original) in enumerate(zip(seqs, grids)):
            restored = codec.decode_to_base(seq, vocab)
            if not restored.same_classes(original):
                raise MdbpeError(f"verification failed for grid {i}")
        _log(f"verified {len(seqs)} sequences against their source grids")
    Path(args.out).write_bytes(formats.write_seq_corpus(seqs))
    total_cells = sum(g.n_cells for g in grids)
    total_tokens = sum(len(s) for s in seqs)
    _log(
        f"encoded {len(seqs)} grids: {total_tokens} tokens from "
        f"{total_cells} cells ({100.0 * total_tokens / total_cells:.2f}%)"
    )
    return {
        "command": "encode",
        "sequences": len(seqs),
        "total_cells": total_cells,
        "total_tokens": total_tokens,
        "compression_percent": 100.0 * total_tokens / total_cells,
        "out": str(args.out),
    }


def _cmd_decode(args: argparse.Namespace) -> dict:
    vocab = vocab_mod.load_vocab(args.vocab)
    seqs = formats.read_sequences_any(_read(args.in_path))
    grids = [codec.decode_to_base(seq, vocab) for seq in seqs]
    if args.verify:
        recompressed = trainer.apply_rules(grids, vocab, threads=args.threads)
        for i, (seq, grid) in enumerate(zip(seqs, recompressed)):
            again = codec.encode(grid, vocab, validate=False)
            if again != seq:
                raise MdbpeError(f"verification failed for sequence {i}")
        _log(f"verified {len(seqs)} decoded grids re-encode identically")
    Path(args.out).write_bytes(formats.write_grid_corpus(grids))
    _log(f"decoded {len(grids)} grids")
    return {"command": "decode", "grids": len(grids), "out": str(args.out)}


def _cmd_stats(args: argparse.Namespace) -> dict:
    vocab = vocab_mod.load_vocab(args.vocab)
    grids = formats.read_grids_any(_read(args.in_path))
    stats = codec.compression_stats(grids, vocab, threads=args.threads)
    _log(
        f"compression {stats.percent:.2f}% "
        f"({stats.total_tokens} tokens / {stats.total_cells} cells), "
        f"mean length {stats.mean_length:.1f}, max {stats.max_length}"
    )
    written = []
    if args.report_dir:
        written = [str(p) for p in report.write_report(stats, Path(args.report_dir))]
        _log("report written: " + ", ".join(written))
    summary = stats.to_dict()
    summary["command"] = "stats"
    summary["report_files"] = written
    return summary


def _cmd_collapse(args: argparse.Namespace) -> dict:
    codebook = formats.read_codebook(_read(args.codebook))
    cmap = collapse.collapse_codebook(
        codebook, args.k, max_iters=args.max_iters, tol=args.tol
    )
    Path(args.out_map).write_bytes(formats.write_collapse_map(cmap))
    _log(f"collapsed {codebook.size} classes to {cmap.k} centers")
    summary = {
        "command": "collapse",
        "codebook_size": codebook.size,
        "k": cmap.k,
        "out_map": str(args.out_map),
    }
    if args.in_path:
        if not args.out:
            raise MdbpeError("--in requires --out for the snapped corpus")
        grids = formats.read_grids_any(_read(args.in_path))
        snapped = collapse.snap(grids, cmap)
        Path(args.out).write_bytes(formats.write_grid_corpus(snapped))
        _log(f"snapped {len(snapped)} grids onto the collapsed classes")
        summary["snapped_grids"] = len(snapped)
        summary["out"] = str(args.out)
    return summary


def _cmd_prune(args: argparse.Namespace) -> dict:
    seqs = formats.read_sequences_any(_read(args.in_path))
    lengths = [len(s) for s in seqs]
    kept = collapse.prune(seqs, lengths, args.fraction)
    Path(args.out).write_bytes(formats.write_seq_corpus(kept))
    _log(
        f"pruned {len(seqs) - len(kept)} of {len(seqs)} sequences "
        f"(fraction {args.fraction})"
    )
    return {
        "command": "prune",
        "in_sequences": len(seqs),
        "kept": len(kept),
        "dropped": len(seqs) - len(kept),
        "out": str(args.out),
    }


def _cmd_features(args: argparse.Namespace) -> dict:
    from . import seqfeat

    vocab = vocab_mod.load_vocab(args.vocab)
    seqs = formats.read_sequences_any(_read(args.in_path))
    all_features = []
    width = None
    for seq in seqs:
        pe = seqfeat.PositionalEncodingTable(seq.dims, args.pe_dim)
        width = pe.width
        all_features.append(seqfeat.emit_features(seq, vocab, pe))
    if len(all_features) == 1:
        payload = formats.write_features(all_features[0], width)
    else:
        payload = formats.write_features_corpus(all_features, width)
    Path(args.out).write_bytes(payload)
    count = sum(len(f) for f in all_features)
    _log(f"emitted features for {count} tokens across {len(seqs)} sequences")
    return {
        "command": "features",
        "sequences": len(seqs),
        "tokens": count,
        "pe_width": width,
        "out": str(args.out),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdbpe",
        description="Multidimensional byte pair encoding over token grids.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help=f"worker threads (default from ${_ENV_THREADS} or 1)",
    )
    parser.add_argument(
        "--json", action="store_true", help="print a JSON summary to stdout"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train merge rules on a grid corpus")
    p.add_argument("--corpus", required=True, help="MDTC/MDTG input")
    p.add_argument("--extra-tokens", type=int, required=True)
    p.add_argument("--axes", help="neighbor axes, e.g. 0,1 (default: all)")
    p.add_argument("--base-size", type=int, help="base vocabulary size")
    p.add_argument("--out", required=True, help="vocabulary JSON output")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("encode", help="compress grids into sequences")
    p.add_argument("--vocab", required=True)
    p.add_argument("--in", dest="in_path", required=True, help="MDTC/MDTG input")
    p.add_argument("--out", required=True, help="MDSC output")
    p.add_argument("--verify", action="store_true",
                   help="decode each sequence and compare to the source")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="reconstruct grids from sequences")
    p.add_argument("--vocab", required=True)
    p.add_argument("--in", dest="in_path", required=True, help="MDSC/MDSQ input")
    p.add_argument("--out", required=True, help="MDTC output")
    p.add_argument("--verify", action="store_true",
                   help="re-encode the decoded grids and compare")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("stats", help="held-out compression measurement")
    p.add_argument("--vocab", required=True)
    p.add_argument("--in", dest="in_path", required=True, help="MDTC/MDTG input")
    p.add_argument("--report-dir",
                   help="write lengths.csv, summary.csv and the histogram here")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("collapse", help="cluster a codebook and snap grids")
    p.add_argument("--codebook", required=True, help="MDCB input")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out-map", required=True, help="collapse map JSON output")
    p.add_argument("--in", dest="in_path", help="optional MDTC corpus to snap")
    p.add_argument("--out", help="snapped MDTC output")
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=_cmd_collapse)

    p = sub.add_parser("prune", help="drop the longest-sequence fraction")
    p.add_argument("--in", dest="in_path", required=True, help="MDSC input")
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--out", required=True, help="MDSC output")
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("features", help="emit per-token feature vectors")
    p.add_argument("--vocab", required=True)
    p.add_argument("--in", dest="in_path", required=True, help="MDSC/MDSQ input")
    p.add_argument("--pe-dim", type=int, required=True,
                   help="encoding values per axis (even)")
    p.add_argument("--out", required=True, help="MDFT/MDFC output")
    p.set_defaults(func=_cmd_features)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.func(args)
    except (MdbpeError, OSError) as exc:
        _log(f"error: {exc}")
        return 1
    _emit(summary, args.json)
    return 0


if __name__ == "__main__":
    sys.exit(main())
