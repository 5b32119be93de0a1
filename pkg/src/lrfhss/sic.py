"""Signal reconstruction and successive interference cancellation.

Once a packet is decoded its received waveform is re-estimated and
subtracted from the trace so weaker packets underneath can emerge. Three
residual effects separate the received block from the ideal waveform:

  * a timing error tau, estimated from the phase difference across bit
    transitions (a transition's center phases differ by -+pi*tau/T
    depending on direction, and the channel phase cancels out);
  * a residual frequency delta and per-antenna channel phases theta_a,
    jointly fit by weighted least squares on the phase-difference matrix
    (closed form below); and
  * a per-antenna amplitude, taken as a 10%-trimmed mean magnitude ratio
    against the ideal filtered waveform.

delta/theta are re-estimated every 10 symbols (40 samples at a quarter
symbol spacing) so slow phase jitter and per-block fading are tracked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as _signal

from . import gmsk, params
from .frontend import _H3, BasebandBlock

_SPS16 = params.BASEBAND_SPS
_DECIM = params.BASEBAND_DECIM
_QUARTER = 4  # 16-sps samples per reconstruction sample
TRIM_FRACTION = 0.10
MIN_TRANSITIONS = 4


def filtered_ideal(symbol_bits: np.ndarray) -> np.ndarray:
    """Ideal block waveform at 16 samples/symbol through the channel LPF."""
    wave = gmsk.modulate(symbol_bits, _SPS16)
    return _signal.fftconvolve(wave, _H3, mode="same")


def tau_from_center_phases(phases: np.ndarray, symbol_bits: np.ndarray,
                           weights: np.ndarray) -> tuple[float, bool]:
    """Timing error from bit-transition phase differences.

    phases has shape (n_antennas, n_symbols): the received phase at each
    symbol center. Returns (tau_seconds, confident); tau is the amount
    the true timing lies after the sampled grid.
    """
    b = np.asarray(symbol_bits)
    trans = np.flatnonzero(b[1:] != b[:-1])
    if len(trans) < MIN_TRANSITIONS:
        return 0.0, False
    sign = np.where(b[trans + 1] == 1, 1.0, -1.0)  # +1 for a 0->1 transition
    d = phases[:, trans + 1] - phases[:, trans]
    d = np.angle(np.exp(1j * d))
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    per_antenna = np.mean(sign * d, axis=1)
    tau = -(params.SYMBOL_S / np.pi) * float(w @ per_antenna)
    # pulse shaping and the channel LPF flatten the slope at the symbol
    # centers, shrinking the raw estimate by a fixed, calibrated factor
    return tau / _tau_gain(), True


_TAU_GAIN: list[float] = []


def _tau_gain() -> float:
    if not _TAU_GAIN:
        rng = np.random.default_rng(1234)
        bits = rng.integers(0, 2, 256)
        wave = filtered_ideal(bits)
        centers = np.arange(len(bits)) * _SPS16 + _SPS16 // 2
        shift = 1  # one baseband sample = T/16
        gains = []
        for e in (-shift, shift):
            ph = np.angle(wave[centers + e])[None, :]
            b = np.asarray(bits)
            trans = np.flatnonzero(b[1:] != b[:-1])
            sign = np.where(b[trans + 1] == 1, 1.0, -1.0)
            d = np.angle(np.exp(1j * (ph[:, trans + 1] - ph[:, trans])))
            raw = -(params.SYMBOL_S / np.pi) * float(np.mean(sign * d))
            gains.append(raw / (-e * params.SYMBOL_S / _SPS16))
        _TAU_GAIN.append(float(np.mean(gains)))
    return _TAU_GAIN[0]


def estimate_tau(bb: BasebandBlock, start_full: int, symbol_bits: np.ndarray,
                 weights: np.ndarray) -> tuple[float, bool]:
    """Timing error of a decoded block relative to start_full."""
    base = bb.index_of(start_full)
    centers = base + np.arange(len(symbol_bits)) * _SPS16 + _SPS16 // 2
    phases = np.angle(bb.samples[:, centers])
    return tau_from_center_phases(phases, symbol_bits, weights)


def estimate_delta_theta(theta: np.ndarray, weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Weighted least-squares fit theta[a, t] ~ delta*t + theta_a, t = 1..N.

    Minimizes sum_a sum_t w_a (theta[a,t] - delta*t - theta_a)^2; the
    stationarity conditions give theta_a = mean_t(theta[a]) - (N+1)/2 *
    delta and the closed form for delta below. delta is returned in
    radians per sample step.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[1] < 2:
        raise ValueError("need a (n_antennas, N>=2) phase-difference matrix")
    n = theta.shape[1]
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    t = np.arange(1, n + 1, dtype=np.float64)
    sum_wt = float(w @ (theta @ t))
    sum_w = float(w @ theta.sum(axis=1))
    denom = n * (n + 1) * (2 * n + 1) / 6.0 - n * (n + 1) ** 2 / 4.0
    delta = (sum_wt - (n + 1) / 2.0 * sum_w) / denom
    thetas = theta.mean(axis=1) - (n + 1) * delta / 2.0
    return float(delta), thetas


@dataclass
class SegmentFit:
    first_symbol: int
    n_samples: int           # quarter-symbol samples in the fit
    delta: float             # rad per quarter-symbol step
    thetas: np.ndarray       # (n_antennas,)
    amps: np.ndarray         # (n_antennas,)


@dataclass
class BlockFit:
    tau_s: float
    tau_confident: bool
    shift_full: int          # timing correction in full-rate samples
    segments: list[SegmentFit]
    residual_ratio: float    # 16-sps fit residual over received energy


def fit_block(bb: BasebandBlock, start_full: int, symbol_bits: np.ndarray) -> BlockFit:
    """Estimate tau, then per-segment (delta, theta_a, a_a) for one block."""
    n_sym = len(symbol_bits)
    weights = np.mean(np.abs(bb.samples) ** 2, axis=1)
    weights = weights / max(weights.sum(), 1e-30)

    tau, confident = estimate_tau(bb, start_full, symbol_bits, weights)
    shift_full = int(round(tau * params.SAMPLE_RATE_HZ)) if confident else 0
    # clamp to the fine-sync trust region
    limit = params.SAMPLES_PER_SYMBOL // 8
    shift_full = int(np.clip(shift_full, -limit, limit))
    shift16 = int(round(shift_full / _DECIM))

    ideal = filtered_ideal(symbol_bits)
    base = bb.index_of(start_full) + shift16
    q_idx = np.arange(n_sym * _QUARTER) * _QUARTER + 2   # 16-sps offsets
    recv_idx = base + q_idx
    if recv_idx[0] < 0 or recv_idx[-1] >= bb.samples.shape[1]:
        raise ValueError("block extends outside the baseband window")
    recv = bb.samples[:, recv_idx]
    ref = ideal[q_idx]

    diff = np.unwrap(np.angle(recv) - np.angle(ref)[None, :], axis=1)

    segments: list[SegmentFit] = []
    res_energy = 0.0
    tot_energy = float(np.sum(np.abs(recv) ** 2))
    seg_syms = params.RECON_SEGMENT_SYMBOLS
    for s0 in range(0, n_sym, seg_syms):
        i0 = s0 * _QUARTER
        i1 = min((s0 + seg_syms) * _QUARTER, n_sym * _QUARTER)
        if i1 - i0 < 2:
            # fold a trailing sliver into the previous segment's estimates
            if segments:
                segments[-1].n_samples += i1 - i0
            continue
        theta = diff[:, i0:i1]
        delta, thetas = estimate_delta_theta(theta, weights)
        t = np.arange(1, i1 - i0 + 1)
        amps = np.empty(bb.n_antennas)
        seg_ref = ref[i0:i1]
        ref_mag = _trimmed_mean(np.abs(seg_ref))
        for a in range(bb.n_antennas):
            amps[a] = _trimmed_mean(np.abs(recv[a, i0:i1])) / max(ref_mag, 1e-30)
        segments.append(SegmentFit(s0, i1 - i0, delta, thetas, amps))
        model = seg_ref[None, :] * amps[:, None] * np.exp(
            1j * (thetas[:, None] + delta * t[None, :]))
        res_energy += float(np.sum(np.abs(recv[:, i0:i1] - model) ** 2))

    ratio = res_energy / max(tot_energy, 1e-30)
    return BlockFit(tau_s=tau if confident else 0.0, tau_confident=confident,
                    shift_full=shift_full, segments=segments, residual_ratio=ratio)


def _trimmed_mean(x: np.ndarray, frac: float = TRIM_FRACTION) -> float:
    n = len(x)
    k = int(n * frac)
    if n - 2 * k < 1:
        return float(np.mean(x))
    return float(np.mean(np.sort(x)[k:n - k]))


def reconstruct_block(symbol_bits: np.ndarray, fit: BlockFit,
                      n_antennas: int) -> np.ndarray:
    """Full-rate per-antenna reconstruction of one received block.

    The ideal waveform is scaled and rotated per reconstruction segment;
    the underlying phase trajectory is continuous across segments.
    """
    ideal = gmsk.modulate(symbol_bits, params.SAMPLES_PER_SYMBOL)
    out = np.zeros((n_antennas, len(ideal)), dtype=np.complex128)
    for seg in fit.segments:
        n0 = seg.first_symbol * params.SAMPLES_PER_SYMBOL
        n1 = min(n0 + seg.n_samples * _QUARTER * _DECIM, len(ideal))
        n = np.arange(n0, n1)
        # the fit's t axis: t=1 at 16-sps offset (16*first_symbol + 2)
        t = (n - (n0 + 2 * _DECIM)) / (_QUARTER * _DECIM) + 1.0
        phase = seg.thetas[:, None] + seg.delta * t[None, :]
        out[:, n0:n1] = ideal[None, n0:n1] * seg.amps[:, None] * np.exp(1j * phase)
    return out


def subtract_block(trace_samples: np.ndarray, recon: np.ndarray,
                   start_full: int, freq_hz: float) -> None:
    """Up-convert a reconstruction to its channel and subtract in place."""
    n_total = trace_samples.shape[1]
    n = recon.shape[1]
    lo = max(start_full, 0)
    hi = min(start_full + n, n_total)
    if hi <= lo:
        return
    idx = np.arange(lo, hi, dtype=np.float64)
    carrier = np.exp(2j * np.pi * freq_hz / params.SAMPLE_RATE_HZ * idx)
    trace_samples[:, lo:hi] -= recon[:, lo - start_full:hi - start_full] * carrier
