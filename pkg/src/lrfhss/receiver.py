"""The full receive pipeline with successive interference cancellation.

Each round: acquire headers on the current residual trace, consolidate
them into packet records, decode every record with collision-aware
erasures, then reconstruct and subtract the newly decoded packets so
weaker ones can surface in the next round. Rounds stop when nothing new
decodes (hard cap applies), which also makes the loop deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import params, sic, tx
from .channel import GroundTruth
from .decode import (DecodedPacket, DetectedHeader, OccupancyMap, PacketRecord,
                     block_strengths, caed_mark, consolidate_headers,
                     decode_header, decode_packet, demod_soft, mrc_combine)
from .frontend import coarse_timing, coarse_window, ddc_lpf, fine_sync, screen_headers
from .iq import IqTrace

MAX_ROUNDS = 8
_T = params.SAMPLES_PER_SYMBOL


@dataclass
class ReceiverOptions:
    use_sic: bool = True
    use_caed: bool = True
    ideal_acquisition: bool = False
    max_rounds: int = MAX_ROUNDS


@dataclass
class ReceiveResult:
    packets: list[DecodedPacket] = field(default_factory=list)
    headers: list[DetectedHeader] = field(default_factory=list)
    rounds: int = 0
    records_seen: int = 0


def acquire(trace: IqTrace) -> tuple[list[PacketRecord], list[DetectedHeader]]:
    """Screen, synchronize and decode headers; consolidate into records."""
    detected: list[DetectedHeader] = []
    for cand in screen_headers(trace):
        bb = coarse_window(trace, cand)
        coarse = coarse_timing(bb, cand)
        fs = fine_sync(bb, coarse)
        if fs is None:
            continue
        det = decode_header(trace, fs)
        if det.crc_ok:
            detected.append(det)
    return consolidate_headers(detected), detected


def _ideal_records(truth: GroundTruth) -> list[PacketRecord]:
    """Oracle records straight from the ground truth (perfect acquisition)."""
    records = []
    for p in truth.packets:
        plan = tx.build_hop_plan(p.data_rate, len(p.payload), p.hop_sequence_id, 1)
        power = 10.0 ** (p.snr_db / 10.0)
        n_head = params.HEADER_REPLICAS[p.data_rate]
        head_gain = max(float(np.sum(np.abs(p.block_gains[i]) ** 2))
                        for i in range(n_head))
        records.append(PacketRecord(
            data_rate=p.data_rate, payload_len=len(p.payload),
            hop_sequence_id=p.hop_sequence_id, group=p.group,
            start_sample=p.start_sample, cfo_hz=p.doppler_hz,
            energy=power * head_gain, plan=plan,
        ))
    return records


def _same_packet(rec: PacketRecord, pkt: DecodedPacket) -> bool:
    return (rec.key() == pkt.record.key()
            and abs(rec.start_sample - pkt.record.start_sample) <= 2 * _T)


def receive(trace: IqTrace, opts: ReceiverOptions | None = None,
            truth: GroundTruth | None = None) -> ReceiveResult:
    opts = opts or ReceiverOptions()
    if opts.ideal_acquisition and truth is None:
        raise ValueError("ideal acquisition needs the ground truth")
    residual = IqTrace(trace.samples.astype(np.complex128, copy=True),
                       trace.sample_rate_hz)
    result = ReceiveResult()

    for rnd in range(opts.max_rounds):
        result.rounds = rnd + 1
        if opts.ideal_acquisition:
            records = [r for r in _ideal_records(truth)
                       if not any(_same_packet(r, p) for p in result.packets)]
        else:
            records, headers = acquire(residual)
            result.headers.extend(headers)
            records = [r for r in records
                       if not any(_same_packet(r, p) for p in result.packets)]
        result.records_seen += len(records)

        occupancy = OccupancyMap.from_records(records)
        fresh: list[DecodedPacket] = []
        for i, rec in enumerate(records):
            pkt = decode_packet(residual, rec, occupancy, i, opts.use_caed)
            if pkt.crc_ok:
                fresh.append(pkt)
        if not fresh:
            break
        result.packets.extend(fresh)
        if not opts.use_sic:
            break
        for pkt in sorted(fresh, key=lambda p: -p.record.energy):
            subtract_packet(residual, pkt)
    return result


def subtract_packet(residual: IqTrace, pkt: DecodedPacket) -> None:
    """Reconstruct every block of a decoded packet and subtract it."""
    rec = pkt.record
    cfg = tx.PacketConfig(rec.data_rate, pkt.payload, rec.hop_sequence_id, rec.group)
    stream = tx.encode_payload_stream(cfg)

    pos = 0
    for bi, block in enumerate(rec.plan.fragments):
        bits = np.concatenate([
            stream[pos:pos + block.data_bits],
            np.zeros(params.FRAGMENT_GUARD_SYMBOLS, dtype=np.uint8)])
        pos += block.data_bits
        bb = pkt.fragment_bb[bi] if bi < len(pkt.fragment_bb) else None
        _subtract_block(residual, rec, block, bits, bb)

    for block in rec.plan.headers:
        fields = tx.HeaderFields(
            coding_rate=tx.CODING_RATE_OF_DR[rec.data_rate],
            payload_len=rec.payload_len,
            hop_sequence_id=rec.hop_sequence_id,
            header_index=block.index,
        )
        det = next((h for h in rec.headers if h.header_index == block.index), None)
        start = det.start_sample if det is not None else rec.block_start(block)
        freq = det.freq_hz if det is not None else rec.block_freq(block)
        n_full = (block.n_symbols + 4) * params.SAMPLES_PER_SYMBOL
        bb = ddc_lpf(residual, freq, start - 2 * params.SAMPLES_PER_SYMBOL, n_full)
        if det is not None:
            state = det.initial_state
        else:
            state = _fit_header_state(bb, start, fields)
        bits = tx.build_header_symbols(fields, initial_state=state)
        _subtract_block(residual, rec, block, bits, bb, start=start, freq=freq)


def _subtract_block(residual: IqTrace, rec: PacketRecord, block: tx.HopBlock,
                    bits: np.ndarray, bb, start: int | None = None,
                    freq: float | None = None) -> None:
    start = rec.block_start(block) if start is None else start
    freq = rec.block_freq(block) if freq is None else freq
    if bb is None:
        bb = ddc_lpf(residual, freq, start, block.n_symbols * params.SAMPLES_PER_SYMBOL)
    fit = sic.fit_block(bb, start, bits)
    if fit.residual_ratio >= 1.0:
        return  # fit worse than leaving the signal in place
    recon = sic.reconstruct_block(bits, fit, residual.n_antennas)
    sic.subtract_block(residual.samples, recon, start + fit.shift_full, freq)


def _fit_header_state(bb, start: int, fields: tx.HeaderFields) -> int:
    """Best initial encoder state for a header whose fields are known."""
    values = demod_soft(bb, start, params.HEADER_SYMBOLS)
    strengths = block_strengths(bb, start, params.HEADER_SYMBOLS)
    soft = mrc_combine(values, strengths)
    best_state, best_corr = 0, -np.inf
    for s in range(16):
        sym = tx.build_header_symbols(fields, initial_state=s).astype(np.float64)
        corr = float(np.dot(soft[:112], 2.0 * sym[:112] - 1.0))
        if corr > best_corr:
            best_state, best_corr = s, corr
    return best_state