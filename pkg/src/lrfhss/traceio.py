"""Trace files: interleaved int16 I/Q with a JSON sidecar.

Layout: per antenna, all samples back to back (planar); each sample is
4 bytes, int16 real then int16 imaginary, little endian. The sidecar
carries the sample rate, the quantization scale and, for synthesized
traces, the ground truth.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .channel import GroundTruth, TruthPacket
from .iq import IqTrace

FORMAT_VERSION = 1
_FULL_SCALE = 32767


def sidecar_path(trace_path: str | Path) -> Path:
    return Path(str(trace_path) + ".json")


def write_trace(path: str | Path, trace: IqTrace,
                truth: GroundTruth | None = None) -> None:
    path = Path(path)
    peak = float(np.max(np.abs(trace.samples.view(np.float64)))) if trace.samples.size else 1.0
    peak = max(peak, 1e-30)
    scale = peak / _FULL_SCALE
    quant = np.empty((trace.n_antennas, trace.n_samples, 2), dtype="<i2")
    quant[..., 0] = np.round(trace.samples.real / scale)
    quant[..., 1] = np.round(trace.samples.imag / scale)
    path.write_bytes(quant.tobytes())

    meta = {
        "format_version": FORMAT_VERSION,
        "sample_rate_hz": trace.sample_rate_hz,
        "n_antennas": trace.n_antennas,
        "n_samples": trace.n_samples,
        "scale": scale,
    }
    if truth is not None:
        meta["ground_truth"] = truth_to_dict(truth)
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True))


def read_trace(path: str | Path) -> tuple[IqTrace, GroundTruth | None]:
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    if meta["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported trace format {meta['format_version']}")
    raw = np.frombuffer(path.read_bytes(), dtype="<i2")
    n_ant, n_samp = meta["n_antennas"], meta["n_samples"]
    raw = raw.reshape(n_ant, n_samp, 2).astype(np.float64)
    samples = (raw[..., 0] + 1j * raw[..., 1]) * meta["scale"]
    trace = IqTrace(samples, meta["sample_rate_hz"])
    truth = truth_from_dict(meta["ground_truth"]) if "ground_truth" in meta else None
    return trace, truth


def truth_to_dict(truth: GroundTruth) -> dict:
    return {
        "sample_rate_hz": truth.sample_rate_hz,
        "n_antennas": truth.n_antennas,
        "n_samples": truth.n_samples,
        "noise_power": truth.noise_power,
        "packets": [
            {
                "packet_id": p.packet_id,
                "data_rate": p.data_rate,
                "payload_hex": p.payload.hex(),
                "hop_sequence_id": p.hop_sequence_id,
                "group": p.group,
                "snr_db": p.snr_db,
                "start_sample": p.start_sample,
                "doppler_hz": p.doppler_hz,
                "block_channels": list(map(int, p.block_channels)),
                "block_starts": list(map(int, p.block_starts)),
                "block_symbols": list(map(int, p.block_symbols)),
                "block_data_bits": list(map(int, p.block_data_bits)),
                "block_kinds": list(p.block_kinds),
                "block_gains": [[[g.real, g.imag] for g in row]
                                for row in p.block_gains],
            }
            for p in truth.packets
        ],
    }


def truth_from_dict(d: dict) -> GroundTruth:
    truth = GroundTruth(
        sample_rate_hz=d["sample_rate_hz"],
        n_antennas=d["n_antennas"],
        n_samples=d["n_samples"],
        noise_power=d["noise_power"],
    )
    for p in d["packets"]:
        gains = np.array([[complex(re, im) for re, im in row]
                          for row in p["block_gains"]])
        truth.packets.append(TruthPacket(
            packet_id=p["packet_id"],
            data_rate=p["data_rate"],
            payload=bytes.fromhex(p["payload_hex"]),
            hop_sequence_id=p["hop_sequence_id"],
            group=p["group"],
            snr_db=p["snr_db"],
            start_sample=p["start_sample"],
            doppler_hz=p["doppler_hz"],
            block_channels=p["block_channels"],
            block_starts=p["block_starts"],
            block_symbols=p["block_symbols"],
            block_data_bits=p["block_data_bits"],
            block_kinds=p["block_kinds"],
            block_gains=gains,
        ))
    return truth
