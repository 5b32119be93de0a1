"""Bit-level plumbing: CRCs, whitening sequence, block interleaver.

All functions work on numpy uint8 arrays of bits (one bit per element,
MSB-first wherever a multi-bit value is packed).
"""

from __future__ import annotations

import numpy as np

CRC8_POLY = 0x07
CRC16_POLY = 0x1021
CRC16_INIT = 0xFFFF

WHITEN_SEED = 0x1FF  # 9-bit LFSR, x^9 + x^5 + 1, all-ones start

HEADER_INTERLEAVE_ROWS = 8
DATA_INTERLEAVE_ROWS = 10

_whiten_cache: dict[int, np.ndarray] = {}


def bits_from_int(value: int, width: int) -> np.ndarray:
    """MSB-first bit vector of `value` with the given width."""
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def int_from_bits(bits: np.ndarray) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def bits_from_bytes(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bytes_from_bits(bits: np.ndarray) -> bytes:
    if len(bits) % 8 != 0:
        raise ValueError("bit count not a multiple of 8")
    return np.packbits(bits.astype(np.uint8)).tobytes()


def crc8(bits: np.ndarray) -> int:
    """CRC-8 (poly 0x07, zero init, no reflection) over a bit sequence."""
    reg = 0
    for b in bits:
        reg ^= (int(b) & 1) << 7
        if reg & 0x80:
            reg = ((reg << 1) ^ CRC8_POLY) & 0xFF
        else:
            reg = (reg << 1) & 0xFF
    return reg


def crc8_check(bits_with_crc: np.ndarray) -> bool:
    """True when the trailing 8 bits are the CRC of the preceding bits."""
    return crc8(bits_with_crc) == 0


def crc16(payload: bytes) -> int:
    """CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF) over bytes."""
    reg = CRC16_INIT
    for byte in payload:
        reg ^= byte << 8
        for _ in range(8):
            if reg & 0x8000:
                reg = ((reg << 1) ^ CRC16_POLY) & 0xFFFF
            else:
                reg = (reg << 1) & 0xFFFF
    return reg


def crc16_check(payload_with_crc: bytes) -> bool:
    return crc16(payload_with_crc) == 0


def whiten_sequence(n: int) -> np.ndarray:
    """First n bits of the 9-bit LFSR stream (x^9 + x^5 + 1, seed all ones).

    Output bit is the register MSB before each shift.
    """
    if n <= 0:
        return np.zeros(0, dtype=np.uint8)
    have = max(_whiten_cache, default=0)
    if n > have:
        reg = WHITEN_SEED
        out = np.empty(n, dtype=np.uint8)
        for i in range(n):
            out[i] = (reg >> 8) & 1
            fb = ((reg >> 8) ^ (reg >> 4)) & 1
            reg = ((reg << 1) | fb) & 0x1FF
        _whiten_cache.clear()
        _whiten_cache[n] = out
        return out.copy()
    return _whiten_cache[have][:n].copy()


def whiten(bits: np.ndarray) -> np.ndarray:
    """XOR with the whitening stream. Involution: whiten(whiten(x)) == x."""
    seq = whiten_sequence(len(bits))
    return (bits.astype(np.uint8) ^ seq).astype(np.uint8)


def interleave_indices(n: int, rows: int) -> np.ndarray:
    """Permutation for a row-write / column-read block interleaver.

    Bits fill a rows x ceil(n/rows) matrix row by row; output reads the
    matrix column by column, skipping cells past the end of the input.
    Returns idx such that out[k] = in[idx[k]].
    """
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    cols = -(-n // rows)
    order = []
    for c in range(cols):
        for r in range(rows):
            i = r * cols + c
            if i < n:
                order.append(i)
    return np.asarray(order, dtype=np.int64)


def interleave(bits: np.ndarray, rows: int) -> np.ndarray:
    return np.asarray(bits)[interleave_indices(len(bits), rows)]


def deinterleave(bits: np.ndarray, rows: int) -> np.ndarray:
    idx = interleave_indices(len(bits), rows)
    out = np.empty_like(np.asarray(bits))
    out[idx] = np.asarray(bits)
    return out


def deinterleave_indices(n: int, rows: int) -> np.ndarray:
    """Inverse permutation: out[k] = in[inv[k]] undoes interleave."""
    idx = interleave_indices(n, rows)
    inv = np.empty_like(idx)
    inv[idx] = np.arange(n, dtype=np.int64)
    return inv
