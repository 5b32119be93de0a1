"""Convolutional encode/decode vs. independent register and codeword oracles."""

import numpy as np
import pytest

from lrfhss import convcode
from lrfhss.convcode import DATA_CODE, HEADER_CODE


def encode_oracle(bits, generators, constraint, initial_state=0):
    """Oracle: explicit shift-register stepping with a history list.

    history[k] is the input k+1 steps ago; the register that feeds the
    generator taps is [current] + history.
    """
    history = [(initial_state >> k) & 1 for k in range(constraint - 1)]
    out = []
    for b in bits:
        reg = [int(b)] + history
        for g in generators:
            taps = [(g >> k) & 1 for k in range(constraint)]
            out.append(sum(t * r for t, r in zip(taps, reg)) % 2)
        history = [int(b)] + history[:-1]
    return np.array(out, dtype=np.uint8)


def all_codewords(code, n_bits, initial_states):
    """Oracle: exhaustive enumeration of (initial_state, message) codewords."""
    words = []
    for s0 in initial_states:
        for m in range(1 << n_bits):
            msg = np.array([(m >> (n_bits - 1 - i)) & 1 for i in range(n_bits)],
                           dtype=np.uint8)
            words.append((s0, msg, code.encode(msg, s0)))
    return words


def oracle_best(words, soft, erased):
    keep = ~erased.reshape(-1)
    flat = soft.reshape(-1)
    best = None
    for s0, msg, cw in words:
        expect = 2.0 * cw - 1.0
        cost = float(np.sum(((flat - expect) ** 2)[keep]))
        if best is None or cost < best[0] - 1e-12:
            best = (cost, s0, msg)
    return best


class TestEncoders:
    def test_zero_input_zero_state_all_zero(self):
        for code in (HEADER_CODE, DATA_CODE):
            out = code.encode(np.zeros(24, dtype=np.uint8), 0)
            assert not out.any()

    def test_rate_half_length(self):
        rng = np.random.default_rng(0)
        for n in (1, 7, 40):
            bits = rng.integers(0, 2, n).astype(np.uint8)
            assert len(HEADER_CODE.encode(bits, 0)) == 2 * n

    def test_header_encoder_matches_register_oracle(self):
        rng = np.random.default_rng(5)
        msg = rng.integers(0, 2, 40).astype(np.uint8)
        got = convcode.encode_header(msg, initial_state=5)
        expect = encode_oracle(msg, (0o23, 0o35), 5, initial_state=5)
        assert np.array_equal(got, expect)

    def test_header_encoder_depends_on_state(self):
        msg = np.zeros(40, dtype=np.uint8)
        outs = {convcode.encode_header(msg, s).tobytes() for s in range(16)}
        assert len(outs) == 16

    def test_header_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            convcode.encode_header(np.zeros(39, dtype=np.uint8), 0)

    def test_data_encoder_matches_register_oracle_with_puncturing(self):
        rng = np.random.default_rng(6)
        msg = np.concatenate([rng.integers(0, 2, 96), np.zeros(6)]).astype(np.uint8)
        mother = encode_oracle(msg, (0o133, 0o171, 0o165), 7)
        assert np.array_equal(convcode.encode_data(msg, "DR8"), mother)
        # DR9 keeps outputs (0,1) on even steps and (0,) on odd steps
        kept = []
        for t in range(len(msg)):
            kept.append(mother[3 * t])
            if t % 2 == 0:
                kept.append(mother[3 * t + 1])
        assert np.array_equal(convcode.encode_data(msg, "DR9"), np.array(kept))

    def test_data_lengths(self):
        msg = np.zeros(102, dtype=np.uint8)  # 10-byte payload + crc16 + pad
        assert len(convcode.encode_data(msg, "DR8")) == 306
        assert len(convcode.encode_data(msg, "DR9")) == 153
        assert not convcode.encode_data(msg, "DR8").any()
        assert not convcode.encode_data(msg, "DR9").any()

    def test_missing_tail_rejected(self):
        bad = np.ones(20, dtype=np.uint8)
        with pytest.raises(ValueError):
            convcode.encode_data(bad, "DR8")


class TestViterbiData:
    def test_clean_round_trip(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(20, 150))
            msg = np.concatenate([rng.integers(0, 2, n - 6),
                                  np.zeros(6)]).astype(np.uint8)
            for dr in ("DR8", "DR9"):
                coded = convcode.encode_data(msg, dr)
                soft = 2.0 * coded - 1.0
                bits, cost = convcode.decode_data(
                    soft, np.zeros(len(soft), dtype=bool), dr, n)
                assert np.array_equal(bits, msg)
                assert cost < 1e-9

    def test_single_flip_corrected_rate_third(self):
        rng = np.random.default_rng(8)
        msg = np.concatenate([rng.integers(0, 2, 26), np.zeros(6)]).astype(np.uint8)
        coded = convcode.encode_data(msg, "DR8")
        for k in range(len(coded)):
            soft = 2.0 * coded - 1.0
            soft[k] = -soft[k]
            bits, _ = convcode.decode_data(soft, np.zeros(len(soft), dtype=bool),
                                           "DR8", len(msg))
            assert np.array_equal(bits, msg)

    @pytest.mark.parametrize("dr", ["DR8", "DR9"])
    def test_matches_exhaustive_oracle(self, dr):
        rng = np.random.default_rng(9)
        n_info = 12  # 6 free bits + forced zero tail
        msgs = [np.concatenate([np.array([(m >> (5 - i)) & 1 for i in range(6)]),
                                np.zeros(6)]).astype(np.uint8)
                for m in range(64)]
        words = [(0, m, convcode.encode_data(m, dr)) for m in msgs]
        coded_len = convcode.data_coded_len(n_info, dr)
        for trial in range(30):
            soft = rng.normal(0, 1.2, coded_len) + rng.choice([-1, 1], coded_len)
            erased = rng.random(coded_len) < 0.15
            soft[erased] = 0.0
            cost_o, _, msg_o = oracle_best(
                [(s, m, cw) for s, m, cw in words],
                soft.reshape(-1, 1), erased.reshape(-1, 1))
            bits, cost = convcode.decode_data(soft, erased, dr, n_info)
            assert abs(cost - cost_o) < 1e-9
            assert np.array_equal(bits, msg_o)


class TestViterbiHeader:
    def test_state_recovered_clean(self):
        rng = np.random.default_rng(10)
        for state in range(16):
            msg = rng.integers(0, 2, 40).astype(np.uint8)
            coded = convcode.encode_header(msg, state)
            soft = 2.0 * coded - 1.0
            bits, s_hat, cost = convcode.decode_header_bits(soft)
            assert s_hat == state
            assert np.array_equal(bits, msg)
            assert cost < 1e-9

    def test_tie_breaks_to_lowest_state(self):
        # all-zero soft input: every codeword from a zero message costs the
        # same for states whose outputs mirror each other; state 0 must win
        soft = np.zeros(80)
        _, s_hat, _ = convcode.decode_header_bits(soft)
        assert s_hat == 0

    def test_matches_exhaustive_state_message_oracle(self):
        rng = np.random.default_rng(11)
        code = HEADER_CODE
        n_bits = 6
        words = all_codewords(code, n_bits, range(16))
        for trial in range(20):
            soft = rng.normal(0, 1.5, (n_bits, 2)) + rng.choice([-1, 1], (n_bits, 2))
            erased = rng.random((n_bits, 2)) < 0.1
            soft[erased] = 0.0
            cost_o, s_o, msg_o = oracle_best(words, soft, erased)
            bits, s_hat, cost = convcode.viterbi(
                soft, erased, code, init_states=range(16))
            assert abs(cost - cost_o) < 1e-9
            assert s_hat == s_o
            assert np.array_equal(bits, msg_o)
