import numpy as np
import pytest

import mdbpe
from mdbpe import (
    CompressedSequence,
    Constellation,
    GenerationState,
    MergeRule,
    PositionalEncodingTable,
    Vocabulary,
    emit_features,
    from_classes,
    ipe,
    legal_mask,
)


def vocab_with(base, ndim, rules):
    merges = tuple(
        MergeRule(base + i, Constellation(p, n, v)) for i, (p, n, v) in enumerate(rules)
    )
    return Vocabulary(base, ndim, merges)


class TestPositionalEncodingTable:
    def test_width(self):
        pe = PositionalEncodingTable([4, 6], pe_dim=8)
        assert pe.width == 16
        assert pe.encode((0, 0)).shape == (16,)

    def test_deterministic(self):
        a = PositionalEncodingTable([4, 4], 6).encode((2, 3))
        b = PositionalEncodingTable([4, 4], 6).encode((2, 3))
        assert np.array_equal(a, b)

    def test_distinct_positions_distinct_vectors(self):
        pe = PositionalEncodingTable([8, 8], pe_dim=4)
        seen = {tuple(pe.encode(p).round(12)) for p in mdbpe.scan_order([8, 8])}
        assert len(seen) == 64

    def test_position_zero_is_sin0_cos0(self):
        pe = PositionalEncodingTable([2, 2], pe_dim=4)
        vec = pe.encode((0, 0))
        assert np.array_equal(vec, np.tile([0.0, 1.0], 4))

    def test_odd_pe_dim_rejected(self):
        with pytest.raises(mdbpe.MdbpeError):
            PositionalEncodingTable([2, 2], pe_dim=3)

    def test_out_of_bounds_position(self):
        pe = PositionalEncodingTable([2, 2], pe_dim=4)
        with pytest.raises(mdbpe.MdbpeError):
            pe.encode((2, 0))


class TestIpe:
    def test_single_cell_equals_anchor_pe(self):
        pe = PositionalEncodingTable([3, 3], pe_dim=6)
        v = Vocabulary(4, 2)
        got = ipe(v, 2, (0, 0), pe)
        assert np.array_equal(got, pe.encode((0, 0)))

    def test_pair_sums_both_cells(self):
        pe = PositionalEncodingTable([2, 4], pe_dim=4)
        v = vocab_with(2, 2, [(0, 0, (0, -1))])
        got = ipe(v, 2, (0, 0), pe)
        expected = pe.encode((0, 0)) + pe.encode((0, 1))
        assert np.allclose(got, expected)

    def test_out_of_bounds_placement(self):
        pe = PositionalEncodingTable([1, 3], pe_dim=4)
        v = vocab_with(2, 2, [(0, 0, (0, -1))])
        with pytest.raises(mdbpe.DecodeBoundsError):
            ipe(v, 2, (0, 2), pe)

    def test_matches_decoder_covered_cells(self, rng):
        # independent cross-check: sum pe over the cells the decoder covers
        g = from_classes([4, 5], rng.integers(0, 3, size=20))
        res = mdbpe.train([g], 3, mdbpe.TrainConfig(extra_tokens=5))
        compressed, vocab = res.grids[0], res.vocab
        pe = PositionalEncodingTable([4, 5], pe_dim=6)
        seq = mdbpe.encode(compressed, vocab)
        decoded = mdbpe.decode(seq, vocab)
        feats = emit_features(seq, vocab, pe)
        for i, token in enumerate(seq.tokens):
            cells = np.flatnonzero(decoded.ids == i)
            expected = sum(
                pe.encode(mdbpe.grid.unflatten(int(c), (4, 5))) for c in cells
            )
            assert np.allclose(feats[i].ipe, expected)

    def test_linearity_over_constituents(self):
        pe = PositionalEncodingTable([3, 3], pe_dim=4)
        v = vocab_with(2, 2, [(0, 1, (0, -1)), (2, 0, (-1, 0))])
        whole = ipe(v, 3, (0, 0), pe)
        parts = ipe(v, 2, (0, 0), pe) + ipe(v, 0, (1, 0), pe)
        assert np.allclose(whole, parts)


class TestEmitFeatures:
    def test_single_cell_chain_next_anchors(self):
        pe = PositionalEncodingTable([1, 3], pe_dim=4)
        v = Vocabulary(2, 2)
        seq = CompressedSequence((1, 3), [0, 1, 0])
        feats = emit_features(seq, v, pe)
        assert len(feats) == 3
        assert np.array_equal(feats[0].next_anchor_pe, pe.encode((0, 1)))
        assert np.array_equal(feats[1].next_anchor_pe, pe.encode((0, 2)))
        assert np.array_equal(feats[2].next_anchor_pe, pe.end_vector())

    def test_bpe_example_next_anchor_columns(self, bpe_example_trained):
        pe = PositionalEncodingTable([1, 12], pe_dim=4)
        seq = CompressedSequence((1, 12), [2, 2, 4, 3, 4])
        feats = emit_features(seq, bpe_example_trained.vocab, pe)
        for feat, col in zip(feats, [2, 4, 7, 9]):
            assert np.array_equal(feat.next_anchor_pe, pe.encode((0, col)))
        assert np.array_equal(feats[-1].next_anchor_pe, pe.end_vector())

    def test_prefix_causality(self, rng):
        g = from_classes([4, 4], rng.integers(0, 3, size=16))
        res = mdbpe.train([g], 3, mdbpe.TrainConfig(extra_tokens=4))
        seq = mdbpe.encode(res.grids[0], res.vocab)
        pe = PositionalEncodingTable([4, 4], pe_dim=4)
        whole = emit_features(seq, res.vocab, pe)
        for k in range(1, len(seq)):
            prefix = CompressedSequence(seq.dims, seq.tokens[:k])
            got = emit_features(prefix, res.vocab, pe)
            for a, b in zip(got, whole[:k]):
                assert np.array_equal(a.anchor_pe, b.anchor_pe)
                assert np.array_equal(a.next_anchor_pe, b.next_anchor_pe)
                assert np.array_equal(a.ipe, b.ipe)

    def test_single_cell_ipe_equals_anchor_pe(self, rng):
        g = from_classes([3, 3], rng.integers(0, 4, size=9))
        pe = PositionalEncodingTable([3, 3], pe_dim=6)
        seq = mdbpe.encode(g, Vocabulary(4, 2))
        for feat in emit_features(seq, Vocabulary(4, 2), pe):
            assert np.array_equal(feat.ipe, feat.anchor_pe)

    def test_all_vectors_finite(self, bpe_example_trained):
        pe = PositionalEncodingTable([1, 12], pe_dim=8)
        seq = CompressedSequence((1, 12), [2, 2, 4, 3, 4])
        feats = emit_features(seq, bpe_example_trained.vocab, pe)
        for f in feats:
            for vec in (f.anchor_pe, f.next_anchor_pe, f.ipe):
                assert np.all(np.isfinite(vec))


class TestLegalMask:
    def test_empty_grid_all_base_classes_legal(self):
        v = Vocabulary(5, 2)
        state = GenerationState([2, 2], v)
        assert legal_mask(state, v).tolist() == [True] * 5

    def test_boundary_illegal(self):
        v = vocab_with(2, 2, [(0, 0, (0, -1))])
        state = GenerationState([1, 3], v)
        state.place(0)
        state.place(0)
        # next anchor is the last column; the horizontal pair cannot fit
        mask = legal_mask(state, v)
        assert mask.tolist() == [True, True, False]

    def test_overlap_illegal(self):
        # vertical pair placed first; the cell right of the anchor below is
        # taken, so a horizontal pair at (1,0) would overlap
        v = vocab_with(2, 2, [(0, 0, (0, -1)), (0, 0, (-1, 0))])
        state = GenerationState([2, 2], v)
        state.place(3)
        assert state.next_anchor() == (0, 1)
        state.place(3)
        assert state.complete

        state = GenerationState([2, 3], v)
        state.place(0)
        state.place(3)  # vertical pair at (0,1)
        assert state.next_anchor() == (0, 2)
        state.place(3)
        assert state.next_anchor() == (1, 0)
        mask = legal_mask(state, v)
        assert not mask[2]  # horizontal pair would hit (1,1), already covered
        assert mask[0] and mask[1]

    def test_fully_covered_state_errors(self):
        v = Vocabulary(2, 2)
        state = GenerationState([1, 1], v)
        state.place(0)
        with pytest.raises(mdbpe.MdbpeError):
            legal_mask(state, v)

    def test_mask_never_all_false(self, rng):
        g = from_classes([4, 4], rng.integers(0, 2, size=16))
        res = mdbpe.train([g], 2, mdbpe.TrainConfig(extra_tokens=6))
        state = GenerationState([4, 4], res.vocab)
        while not state.complete:
            mask = legal_mask(state, res.vocab)
            assert mask[: res.vocab.base_size].all()
            choices = np.flatnonzero(mask)
            state.place(int(rng.choice(choices)))

    def test_guided_generation_decodes(self, rng):
        g = from_classes([3, 4], rng.integers(0, 2, size=12))
        res = mdbpe.train([g], 2, mdbpe.TrainConfig(extra_tokens=4))
        for _ in range(20):
            state = GenerationState([3, 4], res.vocab)
            while not state.complete:
                choices = np.flatnonzero(legal_mask(state, res.vocab))
                state.place(int(rng.choice(choices)))
            decoded = mdbpe.decode(state.sequence(), res.vocab)
            assert decoded.n_cells == 12
