"""Convolutional codes and soft-decision Viterbi decoding.

Two codes are used:
  * header: rate 1/2, constraint length 5 (octal 23, 35). The encoder may
    start in any of the 16 states and is not flushed, so the decoder tries
    every initial state and keeps the cheapest.
  * data: rate 1/3 mother code, constraint length 7 (octal 133, 171, 165),
    always starting and ending in state 0 (input is zero-padded). The
    higher data rate punctures the mother code to rate 2/3 with a fixed
    period-2 pattern.

Soft symbols are normalized slopes: ideal bit 1 -> +1.0, bit 0 -> -1.0.
The branch metric is the squared distance to the ideal value; positions
flagged as erased contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import DATA_TAIL_BITS


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


@dataclass(frozen=True)
class ConvCode:
    constraint: int
    generators: tuple[int, ...]
    _tables: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_states(self) -> int:
        return 1 << (self.constraint - 1)

    @property
    def n_out(self) -> int:
        return len(self.generators)

    def tables(self):
        """(next_state[S,2], out_bits[S,2,n_out], pred_state[S,2], pred_bit[S,2])."""
        if "next" not in self._tables:
            s_count = self.n_states
            nxt = np.zeros((s_count, 2), dtype=np.int64)
            out = np.zeros((s_count, 2, self.n_out), dtype=np.int8)
            for s in range(s_count):
                for b in (0, 1):
                    reg = (s << 1) | b
                    for j, g in enumerate(self.generators):
                        out[s, b, j] = _parity(reg & g)
                    nxt[s, b] = reg & (s_count - 1)
            pred_state = np.zeros((s_count, 2), dtype=np.int64)
            pred_bit = np.zeros((s_count, 2), dtype=np.int64)
            fill = np.zeros(s_count, dtype=np.int64)
            for s in range(s_count):
                for b in (0, 1):
                    ns = nxt[s, b]
                    pred_state[ns, fill[ns]] = s
                    pred_bit[ns, fill[ns]] = b
                    fill[ns] += 1
            assert np.all(fill == 2)
            self._tables["next"] = nxt
            self._tables["out"] = out
            self._tables["pred_state"] = pred_state
            self._tables["pred_bit"] = pred_bit
            self._tables["expected"] = (2.0 * out - 1.0).astype(np.float64)
        t = self._tables
        return t["next"], t["out"], t["pred_state"], t["pred_bit"]

    def expected(self) -> np.ndarray:
        self.tables()
        return self._tables["expected"]

    def encode(self, bits: np.ndarray, initial_state: int = 0) -> np.ndarray:
        """Encode a bit vector; register holds the last constraint-1 inputs."""
        nxt, out, _, _ = self.tables()
        state = int(initial_state)
        if not 0 <= state < self.n_states:
            raise ValueError(f"initial state {state} outside [0, {self.n_states})")
        coded = np.empty((len(bits), self.n_out), dtype=np.uint8)
        for i, b in enumerate(np.asarray(bits, dtype=np.uint8)):
            coded[i] = out[state, b]
            state = nxt[state, b]
        return coded.reshape(-1)


HEADER_CODE = ConvCode(constraint=5, generators=(0o23, 0o35))
DATA_CODE = ConvCode(constraint=7, generators=(0o133, 0o171, 0o165))

# Period-2 puncturing of the rate-1/3 mother code down to rate 2/3:
# even steps keep outputs 0 and 1, odd steps keep output 0 only.
DR9_PUNCTURE = np.array([[1, 1], [1, 0], [0, 0]], dtype=bool)


def puncture_mask(n_steps: int, dr: str) -> np.ndarray:
    """Boolean keep-mask of shape (n_steps, 3) for the data code."""
    if dr == "DR8":
        return np.ones((n_steps, 3), dtype=bool)
    if dr == "DR9":
        cols = np.arange(n_steps) % 2
        return DR9_PUNCTURE[:, cols].T.copy()
    raise ValueError(f"unknown data rate {dr!r}")


def encode_header(info_bits: np.ndarray, initial_state: int) -> np.ndarray:
    if len(info_bits) != 40:
        raise ValueError(f"header encoder expects 40 bits, got {len(info_bits)}")
    return HEADER_CODE.encode(info_bits, initial_state)


def encode_data(bits: np.ndarray, dr: str) -> np.ndarray:
    """Rate-1/3 (DR8) or punctured rate-2/3 (DR9) encoding of the data path.

    The input must already end with the six flush zeros.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) < DATA_TAIL_BITS or np.any(bits[-DATA_TAIL_BITS:]):
        raise ValueError("data encoder input must end with six zero bits")
    coded = DATA_CODE.encode(bits, 0).reshape(-1, 3)
    mask = puncture_mask(len(bits), dr)
    return coded[mask]


def data_coded_len(n_info: int, dr: str) -> int:
    if dr == "DR8":
        return 3 * n_info
    if dr == "DR9":
        return -(-3 * n_info // 2)
    raise ValueError(f"unknown data rate {dr!r}")


def viterbi(
    soft: np.ndarray,
    erased: np.ndarray,
    code: ConvCode,
    init_states,
    forced_zero_tail: int = 0,
    end_state: int | None = None,
):
    """ML sequence decode under the squared-error metric.

    soft/erased have shape (n_steps, n_out); erased positions are skipped.
    Every state in init_states is tried (batched); the cheapest full path
    wins, ties broken toward the lower-numbered initial state. When
    forced_zero_tail > 0 the last so many inputs are pinned to zero.

    Returns (bits, initial_state, cost).
    """
    soft = np.asarray(soft, dtype=np.float64)
    erased = np.asarray(erased, dtype=bool)
    n_steps = soft.shape[0]
    if soft.shape != (n_steps, code.n_out):
        raise ValueError(f"soft input shape {soft.shape} != ({n_steps}, {code.n_out})")
    _, _, pred_state, pred_bit = code.tables()
    expected = code.expected()  # (S, 2, n_out)
    init_states = list(init_states)
    n_init = len(init_states)
    s_count = code.n_states

    inf = np.inf
    pm = np.full((n_init, s_count), inf)
    for i, s0 in enumerate(init_states):
        pm[i, s0] = 0.0

    bp = np.zeros((n_steps, n_init, s_count), dtype=np.uint8)
    keep = ~erased
    pred_is_one = pred_bit == 1  # (S, 2)
    for t in range(n_steps):
        w = keep[t]
        if w.all():
            bm = ((soft[t] - expected) ** 2).sum(axis=-1)
        else:
            bm = (((soft[t] - expected) ** 2) * w).sum(axis=-1)
        # candidate metric arriving at each state via its two predecessors
        cand = pm[:, pred_state] + bm[pred_state, pred_bit][None, :, :]
        if t >= n_steps - forced_zero_tail:
            cand = np.where(pred_is_one[None, :, :], inf, cand)
        choice = np.argmin(cand, axis=2)
        pm = np.take_along_axis(cand, choice[:, :, None], axis=2)[:, :, 0]
        bp[t] = choice

    if end_state is None:
        end_per_init = np.argmin(pm, axis=1)
        cost_per_init = pm[np.arange(n_init), end_per_init]
    else:
        end_per_init = np.full(n_init, end_state, dtype=np.int64)
        cost_per_init = pm[:, end_state]

    best = int(np.argmin(cost_per_init))
    cost = float(cost_per_init[best])
    state = int(end_per_init[best])
    bits = np.zeros(n_steps, dtype=np.uint8)
    for t in range(n_steps - 1, -1, -1):
        c = bp[t, best, state]
        bits[t] = pred_bit[state, c]
        state = int(pred_state[state, c])
    return bits, init_states[best], cost


def decode_data(soft: np.ndarray, erased: np.ndarray, dr: str, n_info: int):
    """Decode the data path; depunctures internally for the high rate.

    soft/erased are flat vectors in transmitted-bit order (after
    deinterleave/dewhitening). Returns (bits, cost); bits include the
    six tail zeros.
    """
    mask = puncture_mask(n_info, dr)
    full_soft = np.zeros((n_info, 3))
    full_erased = np.ones((n_info, 3), dtype=bool)
    full_soft[mask] = np.asarray(soft, dtype=np.float64)
    full_erased[mask] = np.asarray(erased, dtype=bool)
    bits, _, cost = viterbi(
        full_soft,
        full_erased,
        DATA_CODE,
        init_states=[0],
        forced_zero_tail=DATA_TAIL_BITS,
        end_state=0,
    )
    return bits, cost


def decode_header_bits(soft80: np.ndarray, erased80: np.ndarray | None = None):
    """Decode 80 header soft symbols trying all 16 initial encoder states.

    Returns (bits40, initial_state, cost).
    """
    soft = np.asarray(soft80, dtype=np.float64).reshape(40, 2)
    if erased80 is None:
        erased = np.zeros((40, 2), dtype=bool)
    else:
        erased = np.asarray(erased80, dtype=bool).reshape(40, 2)
    return viterbi(soft, erased, HEADER_CODE, init_states=range(16))
