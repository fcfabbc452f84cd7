"""BPSK over AWGN with reproducible counter-based noise.

Noise sample ``k`` of a lane is a pure function of ``(seed, trial, lane, k)``.
The key of a Philox-4x64 generator is derived from ``(seed, trial, lane)``
with :class:`numpy.random.SeedSequence`; counter block ``k`` yields four 64-bit
words, of which the first two feed a Box-Muller transform::

    u1, u2 = (w0 >> 11) * 2**-53, (w1 >> 11) * 2**-53
    z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)

so any slice of a lane can be regenerated without drawing its prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .siso import CLAMP

__all__ = [
    "ChannelConfig",
    "noise_variance",
    "modulate",
    "demodulate_hard",
    "transmit",
    "to_llr",
    "gaussian",
    "random_bits",
    "LANE_DATA",
]

LANE_DATA = 0

_TWO53 = 2.0**-53


def noise_variance(ebn0_db: float, code_rate: float) -> float:
    """``sigma^2 = 1 / (2 R Eb/N0)`` for unit-energy BPSK; 0 when Eb/N0 is +inf."""
    if not 0 < code_rate <= 1:
        raise ValueError(f"code rate must lie in (0, 1], got {code_rate}")
    if math.isinf(ebn0_db) and ebn0_db > 0:
        return 0.0
    return 1.0 / (2.0 * code_rate * 10.0 ** (ebn0_db / 10.0))


@dataclass(frozen=True)
class ChannelConfig:
    ebn0_db: float
    code_rate: float
    seed: int = 0

    @property
    def sigma2(self) -> float:
        return noise_variance(self.ebn0_db, self.code_rate)


def modulate(bits) -> np.ndarray:
    """Map bit 0 to +1.0 and bit 1 to -1.0."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def demodulate_hard(y) -> np.ndarray:
    return (np.asarray(y) < 0).astype(np.int8)


def _philox(seed: int, trial: int, lane: int, counter: int) -> np.random.Philox:
    key = np.random.SeedSequence([int(seed), int(trial), int(lane)]).generate_state(2, np.uint64)
    return np.random.Philox(key=key, counter=counter)


def gaussian(seed: int, n: int, trial: int = 0, lane: int = 0, start: int = 0) -> np.ndarray:
    """Standard normal samples ``start .. start+n-1`` of lane ``(seed, trial, lane)``."""
    if n <= 0:
        return np.zeros(0)
    raw = _philox(seed, trial, lane, start).random_raw(4 * n).reshape(n, 4)
    u1 = (raw[:, 0] >> np.uint64(11)).astype(np.float64) * _TWO53
    u2 = (raw[:, 1] >> np.uint64(11)).astype(np.float64) * _TWO53
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def random_bits(seed: int, n: int, trial: int = 0, lane: int = LANE_DATA) -> np.ndarray:
    """``n`` uniform information bits keyed like the noise lanes."""
    words = _philox(seed, trial, lane, 0).random_raw(-(-n // 64))
    return np.unpackbits(words.view(np.uint8))[:n].astype(np.int64)


def transmit(
    symbols, cfg: ChannelConfig, trial: int = 0, lane: int = 0, start: int = 0
) -> np.ndarray:
    """Add white Gaussian noise of variance ``cfg.sigma2`` to ``symbols``."""
    x = np.asarray(symbols, dtype=np.float64)
    s2 = cfg.sigma2
    if s2 == 0.0:
        return x.copy()
    z = gaussian(cfg.seed, x.size, trial, lane, start).reshape(x.shape)
    return x + math.sqrt(s2) * z


def to_llr(y, sigma2: float) -> np.ndarray:
    """Channel LLR ``2 y / sigma^2``; saturates to ``±CLAMP`` on a noiseless channel."""
    y = np.asarray(y, dtype=np.float64)
    if sigma2 < 0:
        raise ValueError("negative noise variance")
    if sigma2 == 0.0:
        return CLAMP * np.sign(y)
    return 2.0 * y / sigma2
