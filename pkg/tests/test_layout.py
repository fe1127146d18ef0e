"""Bit layout: mask derivation, encode/decode, storage accounting."""

import math

import numpy as np
import pytest

import altotensor as at
from altotensor.layout import bits_for, extract_mode_array


def deposit_oracle(layout: at.AltoLayout, coords) -> int:
    """Independent encoder: drop bit g of each coordinate into the g-th
    lowest set bit of that mode's mask, reading the mask alone."""
    pos = 0
    for n, c in enumerate(coords):
        mask = layout.masks[n]
        g = 0
        p = 0
        while mask >> p:
            if (mask >> p) & 1:
                pos |= ((int(c) >> g) & 1) << p
                g += 1
            p += 1
    return pos


class TestBuildMasks:
    def test_worked_example_masks(self):
        lay = at.build_masks((4, 8, 2))
        assert lay.bits == (2, 3, 1)
        assert lay.total_bits == 6
        assert lay.width == 64
        assert lay.masks == (0b001010, 0b110100, 0b000001)

    def test_all_singleton_dims(self):
        lay = at.build_masks((1, 1, 1))
        assert lay.total_bits == 0
        assert lay.masks == (0, 0, 0)

    def test_five_three_seven_group_order(self):
        lay = at.build_masks((5, 3, 7))
        assert lay.bits == (3, 2, 3)
        # groups: {1,0,2} at 0-2, {1,0,2} at 3-5, {0,2} at 6-7
        assert lay.positions == ((1, 4, 6), (0, 3), (2, 5, 7))
        assert lay.masks == (0x52, 0x09, 0xA4)

    def test_tie_break_by_mode_number(self):
        lay = at.build_masks((4, 4))
        assert lay.positions == ((0, 2), (1, 3))

    def test_bit_order_within_mode_ascends(self):
        lay = at.build_masks((100, 3, 1000, 17))
        for slots in lay.positions:
            assert list(slots) == sorted(slots)

    def test_width_selection(self):
        assert at.build_masks((1 << 32, 1 << 32)).width == 64
        assert at.build_masks((1 << 33, 1 << 32)).width == 128
        assert at.build_masks((1 << 43, 1 << 43, 1 << 42)).width == 128

    def test_width_overflow(self):
        with pytest.raises(at.WidthOverflowError):
            at.build_masks((1 << 43, 1 << 43, 1 << 43))

    def test_zero_dim_rejected(self):
        with pytest.raises(ValueError):
            at.build_masks((4, 0, 2))

    def test_bits_for(self):
        assert [bits_for(d) for d in (1, 2, 3, 4, 5, 8, 9)] == [0, 1, 2, 2, 3, 3, 4]


class TestLinearize:
    def test_worked_example_values(self):
        lay = at.build_masks((4, 8, 2))
        cases = {(1, 0, 0): 2, (0, 3, 0): 20, (2, 2, 1): 25, (1, 6, 1): 51}
        for coords, want in cases.items():
            assert at.linearize(lay, coords) == want

    def test_origin_maps_to_zero(self):
        lay = at.build_masks((4, 8, 2))
        assert at.linearize(lay, (0, 0, 0)) == 0

    def test_five_three_seven_golden(self):
        lay = at.build_masks((5, 3, 7))
        assert at.linearize(lay, (4, 2, 6)) == 232
        assert deposit_oracle(lay, (4, 2, 6)) == 232

    def test_matches_deposit_oracle(self):
        rng = np.random.default_rng(42)
        for dims in [(4, 8, 2), (5, 3, 7), (1, 9, 1, 16), (600, 2, 45)]:
            lay = at.build_masks(dims)
            coords = rng.integers(0, dims, size=(64, len(dims)))
            for row in coords:
                assert at.linearize(lay, row) == deposit_oracle(lay, row)

    def test_monotone_in_each_coordinate(self):
        lay = at.build_masks((5, 3, 7))
        base = [2, 1, 3]
        for n, dim in enumerate(lay.dims):
            vals = []
            for c in range(dim):
                probe = list(base)
                probe[n] = c
                vals.append(at.linearize(lay, probe))
            assert vals == sorted(vals)
            assert len(set(vals)) == dim

    def test_out_of_range_rejected(self):
        lay = at.build_masks((4, 8, 2))
        with pytest.raises(ValueError):
            at.linearize(lay, (4, 0, 0))
        with pytest.raises(ValueError):
            at.linearize(lay, (0, -1, 0))
        with pytest.raises(ValueError):
            at.linearize(lay, (0, 0))


class TestDelinearize:
    def test_worked_example(self):
        lay = at.build_masks((4, 8, 2))
        assert at.delinearize(lay, 25) == (2, 2, 1)
        assert at.delinearize(lay, 0) == (0, 0, 0)

    def test_ignores_bits_above_total(self):
        lay = at.build_masks((4, 8, 2))
        assert at.delinearize(lay, 25 | (1 << 6)) == (2, 2, 1)
        assert at.delinearize(lay, 25 | (1 << 63)) == (2, 2, 1)

    def test_singleton_mode_decodes_to_zero(self):
        lay = at.build_masks((1, 9, 1, 16))
        for p in range(10):
            coords = at.delinearize(lay, p)
            assert coords[0] == 0 and coords[2] == 0

    def test_exhaustive_bijection_small_boxes(self):
        for dims in [(4, 8, 2), (5, 3, 7), (1, 9, 1, 16)]:
            lay = at.build_masks(dims)
            seen = set()
            for coords in np.ndindex(*dims):
                p = at.linearize(lay, coords)
                assert at.delinearize(lay, p) == coords
                seen.add(p)
            assert len(seen) == math.prod(dims)

    def test_position_round_trip_power_of_two(self):
        lay = at.build_masks((4, 8, 2))
        for p in range(64):
            assert at.linearize(lay, at.delinearize(lay, p)) == p


class TestArrayCodecs:
    @pytest.mark.parametrize(
        "dims", [(4, 8, 2), (5, 3, 7), (1 << 40, 3, 1 << 40, 1 << 40)]
    )
    def test_array_matches_scalar(self, dims):
        rng = np.random.default_rng(7)
        lay = at.build_masks(dims)
        coords = rng.integers(0, dims, size=(50, len(dims)), dtype=np.int64)
        words = at.linearize_array(lay, coords)
        assert words.shape == (50, lay.n_words)
        assert words.dtype == np.uint64
        for row, wrow in zip(coords, words):
            scalar = at.linearize(lay, row)
            combined = sum(int(w) << (64 * i) for i, w in enumerate(wrow))
            assert combined == scalar
        back = at.delinearize_array(lay, words)
        assert np.array_equal(back, coords)

    def test_extract_single_mode(self):
        lay = at.build_masks((5, 3, 7))
        rng = np.random.default_rng(0)
        coords = rng.integers(0, lay.dims, size=(40, 3), dtype=np.int64)
        words = at.linearize_array(lay, coords)
        for n in range(3):
            np.testing.assert_array_equal(
                extract_mode_array(lay, words, n), coords[:, n]
            )

    def test_rejects_bad_shapes(self):
        lay = at.build_masks((4, 8, 2))
        with pytest.raises(ValueError):
            at.linearize_array(lay, np.zeros((3, 2), dtype=np.int64))
        with pytest.raises(ValueError):
            at.linearize_array(lay, np.array([[0, 0, 5]]))
        with pytest.raises(ValueError):
            at.delinearize_array(lay, np.zeros((3, 2), dtype=np.uint64))


class TestStorageStats:
    def test_ratio_three_byte_example(self):
        stats = at.storage_stats((4, 8, 2), 6, word_bits=8)
        assert stats.coo_over_alto == 3.0
        assert stats.s_coo == 6 * 3 * 8
        assert stats.s_alto == 6 * 6.0
        assert stats.s_alto_native == 6 * 64
        assert stats.s_sfc == 6 * 3 * 3

    def test_two_by_two_rounding_forces_ratio_two(self):
        assert at.storage_stats((2, 2), 10).coo_over_alto == 2.0

    def test_real_valued_information_size(self):
        stats = at.storage_stats((5, 5, 5), 1)
        assert stats.s_alto == pytest.approx(3 * math.log2(5))
        assert stats.coo_over_alto == 3.0

    def test_degenerate_all_singleton(self):
        stats = at.storage_stats((1, 1), 3)
        assert stats.coo_over_alto == 1.0
        assert stats.s_alto == 0.0
        assert stats.s_sfc == 0

    def test_word_granularities(self):
        stats = at.storage_stats((5, 1000000, 2), 100, word_bits=8)
        # bits (3, 20, 1) -> 1 + 3 + 1 bytes vs ceil(23.25 / 8) = 3 bytes
        assert stats.s_coo == 100 * 5 * 8
        assert stats.coo_over_alto == 5 / 3
        wide = at.storage_stats((5, 1000000, 2), 100, word_bits=64)
        assert wide.coo_over_alto == 3.0

    def test_rejects_bad_word_bits(self):
        with pytest.raises(ValueError):
            at.storage_stats((4, 4), 1, word_bits=12)
