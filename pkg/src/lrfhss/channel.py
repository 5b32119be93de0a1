"""Channel impairments and trace mixing.

Three channel kinds:
  * AWGN         -- noise only, antennas see identical copies.
  * BLOCK_FADING -- independent complex Gaussian gain per hop block and
                    antenna (coherence much shorter than the hop dwell);
                    approximate stand-in for a strong-multipath channel.
  * LOS_DOPPLER  -- Rician constant gain per antenna plus a small residual
                    carrier offset; approximate stand-in for a satellite
                    line-of-sight channel after Doppler pre-compensation.

SNR convention: the synthesized noise is band-limited to the 137 kHz
system bandwidth with total power 1.0, and a packet's SNR is its on-air
signal power relative to that (so the narrowband receive filter buys
roughly 10*log10(280) ~ 24.5 dB).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import params
from .iq import IqTrace, mix
from .tx import HopPlan, PacketConfig, assemble_packet

RESIDUAL_DOPPLER_MAX_HZ = 50.0


@dataclass(frozen=True)
class ChannelModel:
    kind: str = "AWGN"              # AWGN | BLOCK_FADING | LOS_DOPPLER
    n_antennas: int = 1
    rician_k_db: float = 10.0
    doppler_hz: float | None = None  # None: draw uniformly in +-50 Hz

    def __post_init__(self):
        if self.kind not in ("AWGN", "BLOCK_FADING", "LOS_DOPPLER"):
            raise ValueError(f"unknown channel kind {self.kind!r}")


@dataclass
class Placement:
    """One packet ready to drop into a gateway trace."""

    cfg: PacketConfig
    plan: HopPlan
    samples: np.ndarray             # (n_antennas, n) channel-processed, SNR-scaled
    start_sample: int
    group_offset_channels: int      # frequency shift applied at mix time
    snr_db: float
    block_gains: np.ndarray         # (n_blocks, n_antennas) complex
    doppler_hz: float


@dataclass
class TruthPacket:
    packet_id: int
    data_rate: str
    payload: bytes
    hop_sequence_id: int
    group: int
    snr_db: float
    start_sample: int
    doppler_hz: float
    block_channels: list[int]       # effective grid indices
    block_starts: list[int]         # absolute trace samples
    block_symbols: list[int]
    block_data_bits: list[int]
    block_kinds: list[str]
    block_gains: np.ndarray         # (n_blocks, n_antennas) complex


@dataclass
class GroundTruth:
    sample_rate_hz: float
    n_antennas: int
    n_samples: int
    noise_power: float
    packets: list[TruthPacket] = field(default_factory=list)


def scale_to_snr(trace: IqTrace, snr_db: float) -> IqTrace:
    """Scale so mean on-air |sample|^2 equals 10^(snr/10) against unit noise."""
    s = trace.samples
    on_air = np.abs(s[0]) > 0
    p = float(np.mean(np.abs(s[0, on_air]) ** 2))
    target = 10.0 ** (snr_db / 10.0)
    return IqTrace(s * np.sqrt(target / p), trace.sample_rate_hz)


def apply_channel(trace: IqTrace, plan: HopPlan, model: ChannelModel,
                  rng: np.random.Generator) -> tuple[IqTrace, np.ndarray, float]:
    """Impair one packet. Returns (trace per antenna, block gains, doppler)."""
    n_ant = model.n_antennas
    x = trace.samples[0]
    n_blocks = len(plan.blocks)
    out = np.tile(x, (n_ant, 1))
    gains = np.ones((n_blocks, n_ant), dtype=np.complex128)
    doppler = 0.0

    if model.kind == "BLOCK_FADING":
        gains = (rng.standard_normal((n_blocks, n_ant))
                 + 1j * rng.standard_normal((n_blocks, n_ant))) / np.sqrt(2.0)
        for i, b in enumerate(plan.blocks):
            out[:, b.start_sample:b.end_sample] *= gains[i][:, None]
    elif model.kind == "LOS_DOPPLER":
        k = 10.0 ** (model.rician_k_db / 10.0)
        los = np.sqrt(k / (k + 1.0)) * np.exp(2j * np.pi * rng.random(n_ant))
        diffuse = (rng.standard_normal(n_ant) + 1j * rng.standard_normal(n_ant)) \
            * np.sqrt(1.0 / (2.0 * (k + 1.0)))
        g = los + diffuse
        out *= g[:, None]
        gains *= g[None, :]
        if model.doppler_hz is None:
            doppler = float(rng.uniform(-RESIDUAL_DOPPLER_MAX_HZ, RESIDUAL_DOPPLER_MAX_HZ))
        else:
            doppler = float(model.doppler_hz)
        out = mix(out, doppler, trace.sample_rate_hz)

    return IqTrace(out, trace.sample_rate_hz), gains, doppler


def make_noise(n_samples: int, n_antennas: int, rng: np.random.Generator,
               power: float = 1.0) -> np.ndarray:
    """Stationary circular Gaussian noise band-limited to the 137 kHz band."""
    if power == 0.0:
        return np.zeros((n_antennas, n_samples), dtype=np.complex128)
    white = (rng.standard_normal((n_antennas, n_samples))
             + 1j * rng.standard_normal((n_antennas, n_samples))) / np.sqrt(2.0)
    spec = np.fft.fft(white, axis=1)
    freqs = np.fft.fftfreq(n_samples, d=1.0 / params.SAMPLE_RATE_HZ)
    keep = np.abs(freqs) <= params.OCW_HZ / 2.0
    spec[:, ~keep] = 0.0
    frac = keep.mean()
    return np.fft.ifft(spec, axis=1) * np.sqrt(power / frac)


def place_packet(cfg: PacketConfig, model: ChannelModel, rng: np.random.Generator,
                 start_sample: int, snr_db: float) -> Placement:
    """Build, impair and scale one packet for mixing.

    The packet itself is synthesized in group 1; cfg.group is realized as
    a frequency offset at mix time (multiples of the channel spacing keep
    every hop on the grid).
    """
    base_cfg = PacketConfig(cfg.data_rate, cfg.payload, cfg.hop_sequence_id, group=1)
    trace, plan = assemble_packet(base_cfg)
    faded, gains, doppler = apply_channel(trace, plan, model, rng)
    scaled = scale_to_snr(faded, snr_db)
    return Placement(
        cfg=cfg, plan=plan, samples=scaled.samples, start_sample=start_sample,
        group_offset_channels=cfg.group - 1, snr_db=snr_db,
        block_gains=gains, doppler_hz=doppler,
    )


def mix_packets(placements: list[Placement], duration_s: float,
                n_antennas: int, rng: np.random.Generator,
                noise_power: float = 1.0) -> tuple[IqTrace, GroundTruth]:
    """Sum packets over a noise floor; the ground truth records everything."""
    n_samples = int(round(duration_s * params.SAMPLE_RATE_HZ))
    trace = make_noise(n_samples, n_antennas, rng, power=noise_power)
    truth = GroundTruth(params.SAMPLE_RATE_HZ, n_antennas, n_samples, noise_power)

    for pid, p in enumerate(placements):
        n = p.samples.shape[1]
        if p.start_sample < 0 or p.start_sample + n > n_samples:
            raise ValueError(f"packet {pid} does not fit inside the trace")
        if p.samples.shape[0] != n_antennas:
            raise ValueError("placement antenna count differs from trace")
        offset_hz = p.group_offset_channels * params.OBW_HZ
        shifted = mix(p.samples, offset_hz, params.SAMPLE_RATE_HZ,
                      start_index=p.start_sample)
        trace[:, p.start_sample:p.start_sample + n] += shifted
        truth.packets.append(TruthPacket(
            packet_id=pid,
            data_rate=p.cfg.data_rate,
            payload=p.cfg.payload,
            hop_sequence_id=p.cfg.hop_sequence_id,
            group=p.group_offset_channels + 1,
            snr_db=p.snr_db,
            start_sample=p.start_sample,
            doppler_hz=p.doppler_hz,
            block_channels=[b.channel_index + p.group_offset_channels
                            for b in p.plan.blocks],
            block_starts=[p.start_sample + b.start_sample for b in p.plan.blocks],
            block_symbols=[b.n_symbols for b in p.plan.blocks],
            block_data_bits=[b.data_bits for b in p.plan.blocks],
            block_kinds=[b.kind for b in p.plan.blocks],
            block_gains=p.block_gains,
        ))

    return IqTrace(trace, params.SAMPLE_RATE_HZ), truth
