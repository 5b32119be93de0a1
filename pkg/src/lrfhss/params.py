"""System constants and the channel grid for the EU LR-FHSS profile.

Everything downstream (modulator, receiver, simulator) pulls its numbers
from here, so the sample/symbol bookkeeping lives in exactly one place.
"""

from __future__ import annotations

from dataclasses import dataclass

# Band plan (EU profile, fixed)
OCW_HZ = 137_000.0          # total system bandwidth
OBW_HZ = 488.0              # single channel bandwidth
N_CHANNELS = 280
N_GROUPS = 8
CHANNELS_PER_GROUP = N_CHANNELS // N_GROUPS  # 35

# Timing. The symbol rate is chosen so one symbol is exactly 1024 samples
# at 500 ksps; every block boundary then lands on an integer sample.
SYMBOL_RATE_HZ = 488.28125
SAMPLE_RATE_HZ = 500_000.0
SAMPLES_PER_SYMBOL = 1024
SYMBOL_S = 1.0 / SYMBOL_RATE_HZ  # 2.048 ms

SYNC_WORD = 0x2C0F7995
SYNC_LEN = 32

# Header: 40 coded bits | 32 sync bits | 40 coded bits | 2 guard zeros.
HEADER_SYMBOLS = 114
HEADER_CODED_BITS = 80
HEADER_INFO_BITS = 40
SYNC_START_SYMBOL = 40       # sync occupies symbols [40, 72)
HEADER_GUARD_SYMBOLS = 2

# Data fragment: 48 coded bits plus 2 trailing guard zeros = 50 symbols.
# The last fragment carries the leftover bits (still with guards).
FRAGMENT_DATA_BITS = 48
FRAGMENT_GUARD_SYMBOLS = 2
FRAGMENT_SYMBOLS = FRAGMENT_DATA_BITS + FRAGMENT_GUARD_SYMBOLS

HEADER_DURATION_S = HEADER_SYMBOLS * SYMBOL_S      # ~0.233 s
FRAGMENT_DURATION_S = FRAGMENT_SYMBOLS * SYMBOL_S  # ~0.102 s

# Idle gap between consecutive blocks of one packet.
IDLE_GAP_S = 0.002
IDLE_GAP_SAMPLES = int(round(IDLE_GAP_S * SAMPLE_RATE_HZ))

PAYLOAD_MIN_BYTES = 8
PAYLOAD_MAX_BYTES = 16
PAYLOAD_CRC_BITS = 16
DATA_TAIL_BITS = 6           # zero flush of the memory-6 data encoder

HEADER_REPLICAS = {"DR8": 3, "DR9": 2}

# Receiver-side processing rates. The baseband chain decimates by 64 to
# 16 samples/symbol; reconstruction statistics run at 4 samples/symbol.
BASEBAND_DECIM = 64
BASEBAND_SPS = SAMPLES_PER_SYMBOL // BASEBAND_DECIM        # 16
RECON_SPS = 4
RECON_SEGMENT_SYMBOLS = 10
RECON_SEGMENT_SAMPLES = RECON_SEGMENT_SYMBOLS * RECON_SPS  # 40


@dataclass(frozen=True)
class PhyParams:
    """Bundles the fixed EU profile for code that wants one object."""

    ocw_hz: float = OCW_HZ
    obw_hz: float = OBW_HZ
    symbol_rate_hz: float = SYMBOL_RATE_HZ
    sample_rate_hz: float = SAMPLE_RATE_HZ
    n_channels: int = N_CHANNELS
    n_groups: int = N_GROUPS
    header_duration_s: float = HEADER_DURATION_S
    fragment_duration_s: float = FRAGMENT_DURATION_S
    sync_word: int = SYNC_WORD

    def header_replicas(self, data_rate: str) -> int:
        return HEADER_REPLICAS[data_rate]


def channel_center_freq(channel_index: int) -> float:
    """Center frequency of a channel as an offset from the band center, Hz.

    280 channels spaced by 488 Hz, symmetric about 0, so the full grid
    stays inside the 137 kHz system bandwidth.
    """
    if not 0 <= channel_index < N_CHANNELS:
        raise ValueError(f"channel index {channel_index} outside [0, {N_CHANNELS})")
    return (channel_index - (N_CHANNELS - 1) / 2.0) * OBW_HZ


def freq_to_channel(freq_hz: float) -> int:
    """Nearest grid channel for a frequency offset; clipped to the grid."""
    idx = int(round(freq_hz / OBW_HZ + (N_CHANNELS - 1) / 2.0))
    return min(max(idx, 0), N_CHANNELS - 1)


def group_channels(group: int) -> list[int]:
    """Channel indices of one hopping group (1-based group id)."""
    if not 1 <= group <= N_GROUPS:
        raise ValueError(f"group {group} outside [1, {N_GROUPS}]")
    return list(range(group - 1, N_CHANNELS, N_GROUPS))


def channel_group(channel_index: int) -> int:
    """Group id (1-based) that a channel index belongs to."""
    if not 0 <= channel_index < N_CHANNELS:
        raise ValueError(f"channel index {channel_index} outside [0, {N_CHANNELS})")
    return channel_index % N_GROUPS + 1
