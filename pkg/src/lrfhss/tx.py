"""Packet construction: header bits, hop plans, and waveform assembly.

The bit-level chain is fixed as:
  data:   payload -> crc16 -> pad 6 zeros -> convolutional code ->
          whitening -> interleave (10 rows) -> split into fragments
  header: fields -> crc8 -> rate-1/2 code -> per-half interleave (8 rows)
          -> sync word inserted between the halves -> 2 guard zeros
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bits as bitops
from . import convcode, gmsk, params
from .iq import IqTrace, mix


@dataclass(frozen=True)
class PacketConfig:
    data_rate: str                  # "DR8" | "DR9"
    payload: bytes
    hop_sequence_id: int
    group: int = 1

    def __post_init__(self):
        if self.data_rate not in ("DR8", "DR9"):
            raise ValueError(f"unknown data rate {self.data_rate!r}")
        if not params.PAYLOAD_MIN_BYTES <= len(self.payload) <= params.PAYLOAD_MAX_BYTES:
            raise ValueError(f"payload length {len(self.payload)} outside [8, 16] bytes")
        if not 0 <= self.hop_sequence_id < 512:
            raise ValueError("hop sequence id must fit in 9 bits")
        if not 1 <= self.group <= params.N_GROUPS:
            raise ValueError(f"group {self.group} outside [1, {params.N_GROUPS}]")


@dataclass(frozen=True)
class HopBlock:
    kind: str                       # "header" | "fragment"
    index: int                      # replica index or fragment index
    channel_index: int
    start_sample: int               # offset from packet start
    n_symbols: int
    data_bits: int                  # coded bits carried (0 guard excluded)

    @property
    def n_samples(self) -> int:
        return self.n_symbols * params.SAMPLES_PER_SYMBOL

    @property
    def end_sample(self) -> int:
        return self.start_sample + self.n_samples


@dataclass(frozen=True)
class HopPlan:
    blocks: tuple[HopBlock, ...]

    @property
    def headers(self) -> tuple[HopBlock, ...]:
        return tuple(b for b in self.blocks if b.kind == "header")

    @property
    def fragments(self) -> tuple[HopBlock, ...]:
        return tuple(b for b in self.blocks if b.kind == "fragment")

    @property
    def n_samples(self) -> int:
        return self.blocks[-1].end_sample


@dataclass(frozen=True)
class HeaderFields:
    """Content of the 40-bit pre-code header word.

    Layout (MSB first): coding_rate(2) payload_len(5) hop_sequence_id(9)
    header_index(2) reserved(14) crc8(8).
    """

    coding_rate: int
    payload_len: int
    hop_sequence_id: int
    header_index: int

    def info_bits(self) -> np.ndarray:
        head = np.concatenate([
            bitops.bits_from_int(self.coding_rate, 2),
            bitops.bits_from_int(self.payload_len, 5),
            bitops.bits_from_int(self.hop_sequence_id, 9),
            bitops.bits_from_int(self.header_index, 2),
            np.zeros(14, dtype=np.uint8),
        ])
        crc = bitops.crc8(head)
        return np.concatenate([head, bitops.bits_from_int(crc, 8)])

    @classmethod
    def from_bits(cls, bits40: np.ndarray) -> "HeaderFields":
        return cls(
            coding_rate=bitops.int_from_bits(bits40[0:2]),
            payload_len=bitops.int_from_bits(bits40[2:7]),
            hop_sequence_id=bitops.int_from_bits(bits40[7:16]),
            header_index=bitops.int_from_bits(bits40[16:18]),
        )


CODING_RATE_OF_DR = {"DR8": 1, "DR9": 2}
DR_OF_CODING_RATE = {1: "DR8", 2: "DR9"}

SYNC_BITS = bitops.bits_from_int(params.SYNC_WORD, params.SYNC_LEN)


def header_conv_state(hop_sequence_id: int, header_index: int) -> int:
    """Initial state of the header encoder for a given replica.

    Varies per replica so the receiver genuinely has to recover it.
    """
    return (hop_sequence_id * 5 + header_index * 3 + 1) & 0xF


def n_fragments(payload_len: int, dr: str) -> int:
    n_info = 8 * payload_len + params.PAYLOAD_CRC_BITS + params.DATA_TAIL_BITS
    coded = convcode.data_coded_len(n_info, dr)
    return -(-coded // params.FRAGMENT_DATA_BITS)


def fragment_bit_counts(payload_len: int, dr: str) -> list[int]:
    """Coded bits carried by each fragment; the last may carry fewer."""
    n_info = 8 * payload_len + params.PAYLOAD_CRC_BITS + params.DATA_TAIL_BITS
    coded = convcode.data_coded_len(n_info, dr)
    counts = []
    while coded > 0:
        take = min(params.FRAGMENT_DATA_BITS, coded)
        counts.append(take)
        coded -= take
    return counts


def _lcg_next(state: int) -> int:
    return (state * 6364136223846793005 + 1442695040888963407) & 0xFFFFFFFFFFFFFFFF


def hop_channel_slots(hop_sequence_id: int, n_blocks: int) -> list[int]:
    """Slot sequence (0..34 within the group) for a packet's blocks.

    Deterministic 64-bit LCG seeded by the hop sequence id; a draw equal
    to the previous block's slot is re-drawn once.
    """
    state = hop_sequence_id & 0x1FF
    slots: list[int] = []
    prev = -1
    for _ in range(n_blocks):
        state = _lcg_next(state)
        slot = (state >> 33) % params.CHANNELS_PER_GROUP
        if slot == prev:
            state = _lcg_next(state)
            slot = (state >> 33) % params.CHANNELS_PER_GROUP
        slots.append(slot)
        prev = slot
    return slots


def make_hop_plan(cfg: PacketConfig) -> HopPlan:
    return build_hop_plan(cfg.data_rate, len(cfg.payload), cfg.hop_sequence_id, cfg.group)


def build_hop_plan(dr: str, payload_len: int, hop_sequence_id: int, group: int) -> HopPlan:
    """Block schedule of a packet: replicas of the header, then fragments."""
    n_head = params.HEADER_REPLICAS[dr]
    counts = fragment_bit_counts(payload_len, dr)
    slots = hop_channel_slots(hop_sequence_id, n_head + len(counts))
    blocks = []
    pos = 0
    for i in range(n_head):
        ch = slots[i] * params.N_GROUPS + (group - 1)
        blocks.append(HopBlock("header", i, ch, pos, params.HEADER_SYMBOLS,
                               params.HEADER_CODED_BITS))
        pos += params.HEADER_SYMBOLS * params.SAMPLES_PER_SYMBOL + params.IDLE_GAP_SAMPLES
    for i, nbits in enumerate(counts):
        ch = slots[n_head + i] * params.N_GROUPS + (group - 1)
        n_sym = nbits + params.FRAGMENT_GUARD_SYMBOLS
        blocks.append(HopBlock("fragment", i, ch, pos, n_sym, nbits))
        pos += n_sym * params.SAMPLES_PER_SYMBOL + params.IDLE_GAP_SAMPLES
    return HopPlan(tuple(blocks))


def build_header_symbols(fields: HeaderFields, initial_state: int | None = None) -> np.ndarray:
    """114 header symbol bits: interleaved code halves around the sync word.

    The encoder's initial state defaults to the transmitter's per-replica
    rule; the reconstructor passes the state recovered by the decoder.
    """
    if initial_state is None:
        initial_state = header_conv_state(fields.hop_sequence_id, fields.header_index)
    coded = convcode.encode_header(fields.info_bits(), initial_state)
    first = bitops.interleave(coded[:40], bitops.HEADER_INTERLEAVE_ROWS)
    second = bitops.interleave(coded[40:], bitops.HEADER_INTERLEAVE_ROWS)
    return np.concatenate([first, SYNC_BITS, second,
                           np.zeros(params.HEADER_GUARD_SYMBOLS, dtype=np.uint8)])


def encode_payload_stream(cfg: PacketConfig) -> np.ndarray:
    """Whitened, interleaved coded bit stream carried by the fragments."""
    crc = bitops.crc16(cfg.payload)
    info = np.concatenate([
        bitops.bits_from_bytes(cfg.payload),
        bitops.bits_from_int(crc, 16),
        np.zeros(params.DATA_TAIL_BITS, dtype=np.uint8),
    ])
    coded = convcode.encode_data(info, cfg.data_rate)
    return bitops.interleave(bitops.whiten(coded), bitops.DATA_INTERLEAVE_ROWS)


def block_symbol_bits(cfg: PacketConfig, plan: HopPlan) -> list[np.ndarray]:
    """Symbol bits of every block, in plan order (guard zeros included)."""
    fields_proto = dict(
        coding_rate=CODING_RATE_OF_DR[cfg.data_rate],
        payload_len=len(cfg.payload),
        hop_sequence_id=cfg.hop_sequence_id,
    )
    stream = encode_payload_stream(cfg)
    out = []
    pos = 0
    for block in plan.blocks:
        if block.kind == "header":
            out.append(build_header_symbols(HeaderFields(header_index=block.index, **fields_proto)))
        else:
            chunk = stream[pos:pos + block.data_bits]
            pos += block.data_bits
            out.append(np.concatenate(
                [chunk, np.zeros(params.FRAGMENT_GUARD_SYMBOLS, dtype=np.uint8)]))
    return out


def gmsk_modulate(symbol_bits: np.ndarray, samples_per_symbol: int) -> IqTrace:
    """Single-antenna unit-amplitude GMSK burst for one block."""
    wave = gmsk.modulate(symbol_bits, samples_per_symbol)
    return IqTrace(wave[None, :], params.SAMPLE_RATE_HZ)


def assemble_packet(cfg: PacketConfig) -> tuple[IqTrace, HopPlan]:
    """Complete single-antenna baseband waveform of one packet.

    Each block is modulated, shifted to its channel's offset from the
    band center, and placed on the schedule; idle gaps stay zero.
    """
    plan = make_hop_plan(cfg)
    wave = np.zeros(plan.n_samples, dtype=np.complex128)
    for block, sym_bits in zip(plan.blocks, block_symbol_bits(cfg, plan)):
        burst = gmsk.modulate(sym_bits, params.SAMPLES_PER_SYMBOL)
        f = params.channel_center_freq(block.channel_index)
        wave[block.start_sample:block.end_sample] = mix(
            burst, f, params.SAMPLE_RATE_HZ, start_index=block.start_sample)
    return IqTrace(wave[None, :], params.SAMPLE_RATE_HZ), plan
