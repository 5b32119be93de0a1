"""Complex baseband sample buffers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import SAMPLE_RATE_HZ


@dataclass
class IqTrace:
    """Multi-antenna complex baseband buffer.

    samples has shape (n_antennas, n_samples); values are dimensionless
    baseband amplitudes.
    """

    samples: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trace contains non-finite samples")

    @property
    def n_antennas(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


def mix(samples: np.ndarray, freq_hz: float, sample_rate_hz: float, start_index: int = 0) -> np.ndarray:
    """Multiply by a complex exponential at freq_hz.

    start_index anchors the mixer phase to an absolute sample position so
    that down- and up-conversion of trace extracts stay coherent.
    """
    n = np.arange(start_index, start_index + samples.shape[-1], dtype=np.float64)
    return samples * np.exp(2j * np.pi * freq_hz / sample_rate_hz * n)


def avg_power(samples: np.ndarray) -> float:
    return float(np.mean(np.abs(samples) ** 2))
