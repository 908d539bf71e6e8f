import json
import subprocess
import sys

import numpy as np
import pytest

import mdbpe
from mdbpe import from_classes
from mdbpe.cli import main
from mdbpe.formats import (
    read_grid_corpus,
    read_sequences_any,
    write_codebook,
    write_grid_corpus,
    write_seq_corpus,
)


@pytest.fixture
def bpe_corpus_path(tmp_path, bpe_example_grid):
    path = tmp_path / "corpus.mdtc"
    path.write_bytes(write_grid_corpus([bpe_example_grid]))
    return path


@pytest.fixture
def random_corpus_path(tmp_path, rng):
    grids = [
        from_classes([6, 6], rng.integers(0, 3, size=36)) for _ in range(12)
    ]
    path = tmp_path / "random.mdtc"
    path.write_bytes(write_grid_corpus(grids))
    return path


def train_vocab(tmp_path, corpus_path, extra, *more):
    out = tmp_path / "vocab.json"
    rc = main(
        [
            "train",
            "--corpus",
            str(corpus_path),
            "--extra-tokens",
            str(extra),
            "--out",
            str(out),
            *more,
        ]
    )
    assert rc == 0
    return out


class TestTrain:
    def test_bpe_example_merges(self, tmp_path, bpe_corpus_path, capsys):
        out = train_vocab(tmp_path, bpe_corpus_path, 3)
        vocab = mdbpe.load_vocab(out)
        rules = [
            (r.constellation.class_p, r.constellation.class_n, r.constellation.v_pn)
            for r in vocab.merges
        ]
        assert rules == [(0, 0, (0, -1)), (0, 1, (0, -1)), (3, 1, (0, -2))]
        err = capsys.readouterr().err
        assert "count=4" in err and "count=3" in err and "count=2" in err

    def test_zero_extra_tokens(self, tmp_path, bpe_corpus_path):
        out = train_vocab(tmp_path, bpe_corpus_path, 0)
        assert mdbpe.load_vocab(out).merges == ()

    def test_explicit_base_size(self, tmp_path, bpe_corpus_path):
        out = train_vocab(tmp_path, bpe_corpus_path, 1, "--base-size", "10")
        assert mdbpe.load_vocab(out).base_size == 10

    def test_json_summary(self, tmp_path, bpe_corpus_path, capsys):
        out = tmp_path / "v.json"
        rc = main(
            [
                "--json",
                "train",
                "--corpus",
                str(bpe_corpus_path),
                "--extra-tokens",
                "3",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["command"] == "train"
        assert summary["rules"] == 3

    def test_axes_restriction(self, tmp_path, rng):
        grids = [from_classes([4, 4], rng.integers(0, 2, size=16))]
        corpus = tmp_path / "c.mdtc"
        corpus.write_bytes(write_grid_corpus(grids))
        out = train_vocab(tmp_path, corpus, 4, "--axes", "1")
        vocab = mdbpe.load_vocab(out)
        for rule in vocab.merges:
            assert rule.constellation.v_pn[0] == 0

    def test_missing_corpus_fails(self, tmp_path, capsys):
        rc = main(
            [
                "train",
                "--corpus",
                str(tmp_path / "absent.mdtc"),
                "--extra-tokens",
                "1",
                "--out",
                str(tmp_path / "v.json"),
            ]
        )
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestEncodeDecode:
    def test_roundtrip_is_byte_identical(self, tmp_path, random_corpus_path):
        vocab_path = train_vocab(tmp_path, random_corpus_path, 10)
        seq_path = tmp_path / "seqs.mdsc"
        rc = main(
            [
                "encode",
                "--vocab",
                str(vocab_path),
                "--in",
                str(random_corpus_path),
                "--out",
                str(seq_path),
                "--verify",
            ]
        )
        assert rc == 0
        back_path = tmp_path / "back.mdtc"
        rc = main(
            [
                "decode",
                "--vocab",
                str(vocab_path),
                "--in",
                str(seq_path),
                "--out",
                str(back_path),
                "--verify",
            ]
        )
        assert rc == 0
        assert back_path.read_bytes() == random_corpus_path.read_bytes()

    def test_encode_compresses(self, tmp_path, random_corpus_path):
        vocab_path = train_vocab(tmp_path, random_corpus_path, 10)
        seq_path = tmp_path / "seqs.mdsc"
        main(
            [
                "encode",
                "--vocab",
                str(vocab_path),
                "--in",
                str(random_corpus_path),
                "--out",
                str(seq_path),
            ]
        )
        seqs = read_sequences_any(seq_path.read_bytes())
        total = sum(len(s) for s in seqs)
        assert total < 12 * 36


class TestStats:
    def test_headline_and_report_files(self, tmp_path, random_corpus_path, capsys):
        vocab_path = train_vocab(tmp_path, random_corpus_path, 8)
        report_dir = tmp_path / "report"
        rc = main(
            [
                "--json",
                "stats",
                "--vocab",
                str(vocab_path),
                "--in",
                str(random_corpus_path),
                "--report-dir",
                str(report_dir),
            ]
        )
        assert rc == 0
        captured = capsys.readouterr()
        assert "compression" in captured.err
        summary = json.loads(captured.out)
        assert 0 < summary["compression_percent"] < 100
        lengths = (report_dir / "lengths.csv").read_text().splitlines()
        assert lengths[0] == "grid_index,compressed_length"
        assert len(lengths) == 13
        assert (report_dir / "summary.csv").exists()
        png = (report_dir / "length_histogram.png").read_bytes()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"


class TestCollapsePruneFeatures:
    def test_collapse_map_cardinality(self, tmp_path, rng):
        cb = mdbpe.Codebook(rng.normal(size=(2048, 8)))
        cb_path = tmp_path / "codebook.mdcb"
        cb_path.write_bytes(write_codebook(cb))
        map_path = tmp_path / "map.json"
        rc = main(
            [
                "collapse",
                "--codebook",
                str(cb_path),
                "--k",
                "64",
                "--out-map",
                str(map_path),
            ]
        )
        assert rc == 0
        cmap = mdbpe.formats.read_collapse_map(map_path.read_bytes())
        assert cmap.k == 64
        assert cmap.centers.shape == (64, 8)

    def test_collapse_snaps_corpus(self, tmp_path, rng):
        cb = mdbpe.Codebook(rng.normal(size=(16, 4)))
        cb_path = tmp_path / "cb.mdcb"
        cb_path.write_bytes(write_codebook(cb))
        grids = [from_classes([3, 3], rng.integers(0, 16, size=9))]
        in_path = tmp_path / "in.mdtc"
        in_path.write_bytes(write_grid_corpus(grids))
        out_path = tmp_path / "out.mdtc"
        rc = main(
            [
                "collapse",
                "--codebook",
                str(cb_path),
                "--k",
                "4",
                "--out-map",
                str(tmp_path / "m.json"),
                "--in",
                str(in_path),
                "--out",
                str(out_path),
            ]
        )
        assert rc == 0
        snapped = read_grid_corpus(out_path.read_bytes())
        assert np.unique(snapped[0].classes).size <= 4

    def test_prune(self, tmp_path):
        seqs = [
            mdbpe.CompressedSequence((1, n), list(range(n))) for n in (3, 9, 5, 7)
        ]
        in_path = tmp_path / "in.mdsc"
        in_path.write_bytes(write_seq_corpus(seqs))
        out_path = tmp_path / "out.mdsc"
        rc = main(
            [
                "prune",
                "--in",
                str(in_path),
                "--fraction",
                "0.25",
                "--out",
                str(out_path),
            ]
        )
        assert rc == 0
        kept = read_sequences_any(out_path.read_bytes())
        assert [len(s) for s in kept] == [3, 5, 7]

    def test_features(self, tmp_path, bpe_corpus_path):
        vocab_path = train_vocab(tmp_path, bpe_corpus_path, 3)
        seq_path = tmp_path / "seqs.mdsc"
        main(
            [
                "encode",
                "--vocab",
                str(vocab_path),
                "--in",
                str(bpe_corpus_path),
                "--out",
                str(seq_path),
            ]
        )
        feat_path = tmp_path / "features.mdft"
        rc = main(
            [
                "features",
                "--vocab",
                str(vocab_path),
                "--in",
                str(seq_path),
                "--pe-dim",
                "8",
                "--out",
                str(feat_path),
            ]
        )
        assert rc == 0
        feats = mdbpe.formats.read_features(feat_path.read_bytes())
        assert len(feats) == 5
        assert feats[0].anchor_pe.shape == (16,)


class TestDeterminism:
    def test_thread_count_does_not_change_vocab(self, tmp_path, rng):
        grids = [
            from_classes([8, 8], rng.integers(0, 4, size=64)) for _ in range(40)
        ]
        corpus = tmp_path / "c.mdtc"
        corpus.write_bytes(write_grid_corpus(grids))
        outs = []
        for threads in ("1", "8"):
            out = tmp_path / f"v{threads}.json"
            rc = main(
                [
                    "--threads",
                    threads,
                    "train",
                    "--corpus",
                    str(corpus),
                    "--extra-tokens",
                    "12",
                    "--out",
                    str(out),
                ]
            )
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestEntryPoint:
    def test_module_invocation(self, tmp_path, bpe_corpus_path):
        out = tmp_path / "v.json"
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "mdbpe",
                "train",
                "--corpus",
                str(bpe_corpus_path),
                "--extra-tokens",
                "2",
                "--out",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert out.exists()
