"""Demodulation and packet decoding.

Soft demodulation reads the phase slope of each symbol from two samples
at +-T/4 around the symbol center, normalized so an ideal bit 1 maps to
+1.0. Streams from multiple antennas are combined by maximum ratio
(weights proportional to per-block energy). Decoding then inverts the
transmit chain: deinterleave, dewhiten, soft Viterbi, CRC check.

Collision-aware erasures: once the detected packets' schedules are known,
any symbol whose time-frequency cell carries interfering energy above
1.5x the packet's own energy is zeroed so it cannot misguide the decoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bits as bitops
from . import convcode, params, tx
from .frontend import BasebandBlock, FineSync, ddc_lpf
from .iq import IqTrace

_SPS16 = params.BASEBAND_SPS

CAED_ENERGY_RATIO = 1.5
CAED_FREQ_RANGE_HZ = 244.0
CONSOLIDATE_TOL = params.SAMPLES_PER_SYMBOL  # packet-start matching window


@dataclass
class SoftSymbols:
    values: np.ndarray
    erased: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.erased = np.asarray(self.erased, dtype=bool)
        self.values[self.erased] = 0.0


def demod_soft(bb: BasebandBlock, start_full: int, n_symbols: int) -> np.ndarray:
    """Per-antenna normalized phase slopes, shape (n_antennas, n_symbols).

    Slope of symbol k is the phase change between the samples T/4 before
    and after its center, divided by the ideal pi/4.
    """
    base = bb.index_of(start_full)
    k = np.arange(n_symbols)
    m1 = base + k * _SPS16 + 4
    m2 = base + k * _SPS16 + 12
    if m1[0] < 0 or m2[-1] >= bb.samples.shape[1]:
        raise ValueError("block extends outside the baseband window")
    d = bb.samples[:, m2] * np.conj(bb.samples[:, m1])
    return np.angle(d) / (np.pi / 4.0)


def block_strengths(bb: BasebandBlock, start_full: int, n_symbols: int) -> np.ndarray:
    """Per-antenna mean power over the block, the MRC weight basis."""
    base = bb.index_of(start_full)
    seg = bb.samples[:, max(base, 0):base + n_symbols * _SPS16]
    return np.mean(np.abs(seg) ** 2, axis=1)


def mrc_combine(values: np.ndarray, strengths: np.ndarray) -> np.ndarray:
    """Weight antenna streams proportionally to their channel strength."""
    w = np.asarray(strengths, dtype=np.float64)
    total = w.sum()
    if total <= 0:
        return np.mean(values, axis=0)
    return (w / total) @ values


@dataclass
class DetectedHeader:
    start_sample: int
    freq_hz: float
    sync_score: float
    energy: float
    crc_ok: bool
    coding_rate: int = 0
    payload_len: int = 0
    hop_sequence_id: int = 0
    header_index: int = 0
    initial_state: int = 0
    cost: float = 0.0

    @property
    def data_rate(self) -> str | None:
        return tx.DR_OF_CODING_RATE.get(self.coding_rate)


def decode_header(trace: IqTrace, sync: FineSync) -> DetectedHeader:
    """Demodulate and decode one synchronized header."""
    n_full = params.HEADER_SYMBOLS * params.SAMPLES_PER_SYMBOL
    bb = ddc_lpf(trace, sync.freq_hz, sync.start_sample, n_full)
    values = demod_soft(bb, sync.start_sample, params.HEADER_SYMBOLS)
    strengths = block_strengths(bb, sync.start_sample, params.HEADER_SYMBOLS)
    soft = mrc_combine(values, strengths)
    halves = np.concatenate([
        bitops.deinterleave(soft[0:40], bitops.HEADER_INTERLEAVE_ROWS),
        bitops.deinterleave(soft[72:112], bitops.HEADER_INTERLEAVE_ROWS),
    ])
    bits40, state, cost = convcode.decode_header_bits(halves)
    ok = bitops.crc8_check(bits40)
    det = DetectedHeader(
        start_sample=sync.start_sample, freq_hz=sync.freq_hz,
        sync_score=sync.score, energy=sync.energy, crc_ok=ok,
        initial_state=state, cost=cost,
    )
    if ok:
        f = tx.HeaderFields.from_bits(bits40)
        det.coding_rate = f.coding_rate
        det.payload_len = f.payload_len
        det.hop_sequence_id = f.hop_sequence_id
        det.header_index = f.header_index
        if f.coding_rate not in tx.DR_OF_CODING_RATE or \
                not params.PAYLOAD_MIN_BYTES <= f.payload_len <= params.PAYLOAD_MAX_BYTES:
            det.crc_ok = False  # passes CRC but fields are impossible
    return det


@dataclass
class PacketRecord:
    """Consolidated view of one detected packet: schedule plus sync state."""

    data_rate: str
    payload_len: int
    hop_sequence_id: int
    group: int
    start_sample: int            # packet start, full rate
    cfo_hz: float                # common frequency offset of all blocks
    energy: float                # per-sample in-channel power (CAED unit)
    plan: tx.HopPlan
    headers: list[DetectedHeader] = field(default_factory=list)

    def block_freq(self, block: tx.HopBlock) -> float:
        base = params.channel_center_freq(block.channel_index + self.group - 1)
        return base + self.cfo_hz

    def block_start(self, block: tx.HopBlock) -> int:
        return self.start_sample + block.start_sample

    def key(self):
        return (self.data_rate, self.payload_len, self.hop_sequence_id, self.group)


def _header_stride() -> int:
    return params.HEADER_SYMBOLS * params.SAMPLES_PER_SYMBOL + params.IDLE_GAP_SAMPLES


def consolidate_headers(headers: list[DetectedHeader]) -> list[PacketRecord]:
    """Group decoded headers into packet records.

    Headers merge when the identifying fields match, the detected channel
    is the one their hop sequence predicts, and the back-computed packet
    start times agree within a symbol.
    """
    records: list[PacketRecord] = []
    for h in sorted(headers, key=lambda h: (-h.sync_score, h.start_sample)):
        if not h.crc_ok or h.data_rate is None:
            continue
        n_head = params.HEADER_REPLICAS[h.data_rate]
        if h.header_index >= n_head:
            continue
        ch = params.freq_to_channel(h.freq_hz)
        group = params.channel_group(ch)
        slots = tx.hop_channel_slots(h.hop_sequence_id, n_head)
        if ch // params.N_GROUPS != slots[h.header_index]:
            continue  # channel inconsistent with the announced hop sequence
        t0 = h.start_sample - h.header_index * _header_stride()
        cfo = h.freq_hz - params.channel_center_freq(ch)
        merged = False
        for rec in records:
            if rec.key() == (h.data_rate, h.payload_len, h.hop_sequence_id, group) \
                    and abs(rec.start_sample - t0) <= CONSOLIDATE_TOL:
                rec.headers.append(h)
                rec.energy = max(rec.energy, h.energy)
                merged = True
                break
        if merged:
            continue
        plan = tx.build_hop_plan(h.data_rate, h.payload_len, h.hop_sequence_id, 1)
        records.append(PacketRecord(
            data_rate=h.data_rate, payload_len=h.payload_len,
            hop_sequence_id=h.hop_sequence_id, group=group,
            start_sample=t0, cfo_hz=cfo, energy=h.energy,
            plan=plan, headers=[h],
        ))
    records.sort(key=lambda r: (r.start_sample, r.group))
    return records


@dataclass
class OccupancyMap:
    """Time x frequency energy ledger of every block of detected packets."""

    owner: np.ndarray      # record index per entry
    t_start: np.ndarray
    t_end: np.ndarray
    freq_hz: np.ndarray
    energy: np.ndarray

    @classmethod
    def from_records(cls, records: list[PacketRecord]) -> "OccupancyMap":
        owner, t0, t1, freq, energy = [], [], [], [], []
        for i, rec in enumerate(records):
            for b in rec.plan.blocks:
                owner.append(i)
                t0.append(rec.block_start(b))
                t1.append(rec.block_start(b) + b.n_samples)
                freq.append(rec.block_freq(b))
                energy.append(rec.energy)
        return cls(np.asarray(owner), np.asarray(t0, dtype=np.int64),
                   np.asarray(t1, dtype=np.int64), np.asarray(freq),
                   np.asarray(energy))

    def __len__(self) -> int:
        return len(self.owner)


def caed_mark(record_index: int, record: PacketRecord, block: tx.HopBlock,
              occupancy: OccupancyMap, block_start: int) -> np.ndarray:
    """Erasure flags for the data symbols of one block.

    A symbol is erased when the total energy of other packets within
    244 Hz at that time exceeds 1.5x this packet's energy.
    """
    n_sym = block.data_bits
    flags = np.zeros(n_sym, dtype=bool)
    if len(occupancy) == 0:
        return flags
    f = record.block_freq(block)
    sel = (occupancy.owner != record_index) \
        & (np.abs(occupancy.freq_hz - f) <= CAED_FREQ_RANGE_HZ) \
        & (occupancy.t_end > block_start) \
        & (occupancy.t_start < block_start + n_sym * params.SAMPLES_PER_SYMBOL)
    if not sel.any():
        return flags
    interference = np.zeros(n_sym)
    for t0, t1, e in zip(occupancy.t_start[sel], occupancy.t_end[sel],
                         occupancy.energy[sel]):
        k0 = max(0, (t0 - block_start) // params.SAMPLES_PER_SYMBOL)
        k1 = min(n_sym, -(-(t1 - block_start) // params.SAMPLES_PER_SYMBOL))
        if k1 > k0:
            interference[k0:k1] += e
    return interference > CAED_ENERGY_RATIO * record.energy


@dataclass
class DecodedPacket:
    payload: bytes
    crc_ok: bool
    record: PacketRecord
    erasure_fraction: float
    path_cost: float
    fragment_soft: list[SoftSymbols] = field(default_factory=list, repr=False)
    fragment_bb: list[BasebandBlock] = field(default_factory=list, repr=False)


def decode_packet(trace: IqTrace, record: PacketRecord,
                  occupancy: OccupancyMap | None = None,
                  record_index: int = -1, use_caed: bool = True) -> DecodedPacket:
    """Demodulate every fragment and run the data decoder."""
    soft_parts: list[np.ndarray] = []
    erased_parts: list[np.ndarray] = []
    frag_soft: list[SoftSymbols] = []
    frag_bb: list[BasebandBlock] = []
    margin = 2 * params.SAMPLES_PER_SYMBOL
    for block in record.plan.fragments:
        start = record.block_start(block)
        f = record.block_freq(block)
        n_full = (block.n_symbols + 4) * params.SAMPLES_PER_SYMBOL
        bb = ddc_lpf(trace, f, start - margin, n_full)
        frag_bb.append(bb)
        values = demod_soft(bb, start, block.data_bits)
        strengths = block_strengths(bb, start, block.n_symbols)
        soft = mrc_combine(values, strengths)
        if use_caed and occupancy is not None:
            flags = caed_mark(record_index, record, block, occupancy, start)
        else:
            flags = np.zeros(block.data_bits, dtype=bool)
        ss = SoftSymbols(soft, flags)
        frag_soft.append(ss)
        soft_parts.append(ss.values)
        erased_parts.append(ss.erased)

    soft = np.concatenate(soft_parts)
    erased = np.concatenate(erased_parts)
    n_info = 8 * record.payload_len + params.PAYLOAD_CRC_BITS + params.DATA_TAIL_BITS

    rows = bitops.DATA_INTERLEAVE_ROWS
    soft = bitops.deinterleave(soft, rows)
    erased = bitops.deinterleave(erased, rows)
    sign = 1.0 - 2.0 * bitops.whiten_sequence(len(soft)).astype(np.float64)
    soft = soft * sign

    decoded, cost = convcode.decode_data(soft, erased, record.data_rate, n_info)
    payload_bits = decoded[:8 * record.payload_len]
    crc_bits = decoded[8 * record.payload_len:8 * record.payload_len + 16]
    payload = bitops.bytes_from_bits(payload_bits)
    ok = bitops.crc16(payload) == bitops.int_from_bits(crc_bits)
    return DecodedPacket(
        payload=payload, crc_ok=ok, record=record,
        erasure_fraction=float(erased.mean()), path_cost=cost,
        fragment_soft=frag_soft, fragment_bb=frag_bb,
    )
