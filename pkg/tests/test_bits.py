"""Bit-level operations checked against independent bitwise oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrfhss import bits


def crc_long_division(msg_bits, poly, width, init):
    """Oracle: polynomial long division, one bit at a time."""
    reg = init
    top = 1 << (width - 1)
    mask = (1 << width) - 1
    for b in msg_bits:
        reg ^= (int(b) & 1) << (width - 1)
        if reg & top:
            reg = ((reg << 1) ^ poly) & mask
        else:
            reg = (reg << 1) & mask
    return reg


class TestCrc8:
    def test_zero_input_is_zero(self):
        assert bits.crc8(np.zeros(32, dtype=np.uint8)) == 0

    def test_appended_crc_verifies(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            msg = rng.integers(0, 2, 32).astype(np.uint8)
            full = np.concatenate([msg, bits.bits_from_int(bits.crc8(msg), 8)])
            assert bits.crc8_check(full)

    def test_against_long_division_oracle(self):
        msg = bits.bits_from_bytes(b"\x31\x32\x33")
        expect = crc_long_division(msg, poly=0x07, width=8, init=0x00)
        assert bits.crc8(msg) == expect
        rng = np.random.default_rng(2)
        for _ in range(50):
            m = rng.integers(0, 2, int(rng.integers(1, 80))).astype(np.uint8)
            assert bits.crc8(m) == crc_long_division(m, 0x07, 8, 0x00)


class TestCrc16:
    def test_standard_check_value(self):
        # "123456789" under CCITT-FALSE, recomputed by the bit oracle
        data = b"123456789"
        oracle = crc_long_division(bits.bits_from_bytes(data), 0x1021, 16, 0xFFFF)
        assert oracle == 0x29B1
        assert bits.crc16(data) == 0x29B1

    def test_appended_crc_verifies(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            payload = rng.integers(0, 256, int(rng.integers(1, 20))).astype(np.uint8).tobytes()
            c = bits.crc16(payload)
            assert bits.crc16_check(payload + c.to_bytes(2, "big"))

    def test_single_bit_flip_detected(self):
        rng = np.random.default_rng(4)
        payload = rng.integers(0, 256, 12).astype(np.uint8).tobytes()
        full = bytearray(payload + bits.crc16(payload).to_bytes(2, "big"))
        for byte_i in range(len(full)):
            for bit_i in range(8):
                flipped = bytearray(full)
                flipped[byte_i] ^= 1 << bit_i
                assert not bits.crc16_check(bytes(flipped))


class TestWhitening:
    def test_stream_prefix_matches_stepped_register(self):
        # oracle: explicit list-of-bits register, taps x^9 + x^5 + 1
        reg = [1] * 9  # reg[0] is the output end
        expect = []
        for _ in range(64):
            expect.append(reg[0])
            fb = reg[0] ^ reg[4]
            reg = reg[1:] + [fb]
        assert bits.whiten_sequence(64).tolist() == expect

    def test_zero_input_gives_raw_stream(self):
        n = 200
        out = bits.whiten(np.zeros(n, dtype=np.uint8))
        assert np.array_equal(out, bits.whiten_sequence(n))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 1), min_size=1, max_size=500))
    def test_involution(self, data):
        x = np.array(data, dtype=np.uint8)
        assert np.array_equal(bits.whiten(bits.whiten(x)), x)

    def test_period_is_511(self):
        seq = bits.whiten_sequence(1022)
        assert np.array_equal(seq[:511], seq[511:])
        assert not np.array_equal(seq[:510], seq[1:511])


class TestInterleaver:
    def test_explicit_permutation_16_bits_4_rows(self):
        # oracle: 4x4 matrix written row-major, read column-major
        n, rows, cols = 16, 4, 4
        expect = [r * cols + c for c in range(cols) for r in range(rows)]
        assert bits.interleave_indices(n, rows).tolist() == expect
        x = np.arange(n)
        assert bits.interleave(x, rows).tolist() == [x[i] for i in expect]

    def test_tail_skip_against_index_oracle(self):
        for n in (7, 10, 33, 41, 306):
            for rows in (3, 8, 10):
                cols = -(-n // rows)
                expect = [r * cols + c for c in range(cols) for r in range(rows)
                          if r * cols + c < n]
                assert bits.interleave_indices(n, rows).tolist() == expect

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 400), st.integers(2, 12))
    def test_round_trip_and_multiset(self, n, rows):
        rng = np.random.default_rng(n * 31 + rows)
        x = rng.integers(0, 2, n).astype(np.uint8)
        y = bits.interleave(x, rows)
        assert sorted(y.tolist()) == sorted(x.tolist())
        assert np.array_equal(bits.deinterleave(y, rows), x)

    def test_round_trip_all_lengths_to_400(self):
        for n in range(1, 401):
            x = np.arange(n)
            assert np.array_equal(bits.deinterleave(bits.interleave(x, 10), 10), x)


class TestPacking:
    def test_int_round_trip(self):
        for v, w in ((0x2C0F7995, 32), (0, 8), (511, 9), (1, 2)):
            assert bits.int_from_bits(bits.bits_from_int(v, w)) == v

    def test_bytes_round_trip(self):
        data = bytes(range(17))
        assert bits.bytes_from_bits(bits.bits_from_bytes(data)) == data

    def test_bad_length_rejected(self):
        with pytest.raises(ValueError):
            bits.bytes_from_bits(np.zeros(9, dtype=np.uint8))
