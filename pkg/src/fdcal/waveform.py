"""OFDM transmit waveforms, the received signal of interest, and signal statistics.

Power convention used throughout the package: a mean-square sample amplitude
of 1.0 corresponds to 0 dBm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UsageError

CONSTELLATIONS = ("16qam",)


def dbm_to_power(dbm):
    """Convert dBm to linear mean-square amplitude (1.0 == 0 dBm)."""
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def power_to_dbm(power):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(power)


@dataclass(frozen=True)
class ComplexBaseband:
    """Complex baseband samples tagged with their sample rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.complex128).ravel())
        if not self.sample_rate_hz > 0:
            raise UsageError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    def __len__(self):
        return self.samples.size

    def _check(self, other):
        if self.sample_rate_hz != other.sample_rate_hz:
            raise UsageError(
                f"sample rates differ: {self.sample_rate_hz} vs {other.sample_rate_hz}"
            )
        if len(self) != len(other):
            raise UsageError(f"lengths differ: {len(self)} vs {len(other)}")

    def __add__(self, other):
        self._check(other)
        return ComplexBaseband(self.samples + other.samples, self.sample_rate_hz)

    def __sub__(self, other):
        self._check(other)
        return ComplexBaseband(self.samples - other.samples, self.sample_rate_hz)

    def scaled(self, factor):
        return ComplexBaseband(self.samples * factor, self.sample_rate_hz)

    def replace(self, samples):
        return ComplexBaseband(samples, self.sample_rate_hz)

    def window(self, start, stop=None):
        return ComplexBaseband(self.samples[start:stop], self.sample_rate_hz)

    @property
    def mean_power(self):
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass(frozen=True)
class OfdmParams:
    """OFDM numerology. Defaults follow the reference 2x2 transceiver."""

    n_subcarriers: int = 64
    cp_len: int = 16
    constellation: str = "16qam"
    oversampling: int = 4
    bandwidth_hz: float = 12.5e6
    sample_rate_hz: float = 64e6

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise ConfigError("n_subcarriers must be a positive integer")
        if self.cp_len < 0 or self.cp_len >= self.n_subcarriers:
            raise ConfigError("cp_len must satisfy 0 <= cp_len < n_subcarriers")
        if self.constellation.lower() not in CONSTELLATIONS:
            raise ConfigError(f"unsupported constellation {self.constellation!r}")
        if self.oversampling < 1:
            raise ConfigError("oversampling must be a positive integer")
        if not self.bandwidth_hz > 0 or not self.sample_rate_hz > 0:
            raise ConfigError("bandwidth_hz and sample_rate_hz must be positive")

    @property
    def fft_size(self):
        return self.n_subcarriers * self.oversampling

    @property
    def frame_len(self):
        """Samples per OFDM symbol including the cyclic prefix."""
        return (self.n_subcarriers + self.cp_len) * self.oversampling


_QAM16_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0]) / math.sqrt(10.0)


def qam16_symbols(rng, size):
    """Uniform i.i.d. unit-energy 16-QAM symbols."""
    idx = rng.integers(0, 4, size=(2,) + tuple(np.atleast_1d(size)))
    return _QAM16_LEVELS[idx[0]] + 1j * _QAM16_LEVELS[idx[1]]


def _ofdm_samples(params, n_symbols, rng):
    nsc, nfft = params.n_subcarriers, params.fft_size
    data = qam16_symbols(rng, (n_symbols, nsc))
    # subcarriers -nsc/2 .. nsc/2-1 around DC; the remaining bins stay empty
    bins = np.zeros((n_symbols, nfft), dtype=np.complex128)
    carriers = np.arange(nsc) - nsc // 2
    bins[:, carriers % nfft] = data
    body = np.fft.ifft(bins, axis=1, norm="ortho") * math.sqrt(nfft / nsc)
    cp = params.cp_len * params.oversampling
    frames = np.concatenate([body[:, nfft - cp:], body], axis=1) if cp else body
    return frames.ravel()


def _unit_power(x):
    p = np.mean(np.abs(x) ** 2)
    return x / math.sqrt(p) if p > 0 else x


def generate_ofdm_frames(params: OfdmParams, n_symbols: int, rng: np.random.Generator) -> ComplexBaseband:
    """Generate ``n_symbols`` consecutive OFDM symbols normalized to unit mean power."""
    if n_symbols < 1:
        raise UsageError("n_symbols must be >= 1")
    x = _unit_power(_ofdm_samples(params, n_symbols, rng))
    return ComplexBaseband(x, params.sample_rate_hz)


def ofdm_waveform(params: OfdmParams, n_samples: int, rng: np.random.Generator) -> ComplexBaseband:
    """Unit-power OFDM waveform of exactly ``n_samples`` samples (last frame truncated)."""
    if n_samples < 1:
        raise UsageError("n_samples must be >= 1")
    n_symbols = -(-n_samples // params.frame_len)
    x = _ofdm_samples(params, n_symbols, rng)[:n_samples]
    return ComplexBaseband(_unit_power(x), params.sample_rate_hz)


def generate_soi(params: OfdmParams, power_dbm: float, n_samples: int, rng: np.random.Generator) -> ComplexBaseband:
    """Received signal of interest: an independent OFDM stream at a fixed power.

    The remote transmitter is not frame-synchronous with the local one, so the
    stream starts at a random offset within an OFDM symbol. ``power_dbm = -inf``
    yields an all-zero signal, which is how a calibration period (no remote
    transmission) is represented.
    """
    if n_samples < 1:
        raise UsageError("n_samples must be >= 1")
    if np.isneginf(power_dbm):
        return ComplexBaseband(np.zeros(n_samples, dtype=np.complex128), params.sample_rate_hz)
    offset = int(rng.integers(0, params.frame_len))
    x = ofdm_waveform(params, n_samples + offset, rng).window(offset)
    x = ComplexBaseband(_unit_power(x.samples), params.sample_rate_hz)
    return x.scaled(math.sqrt(float(dbm_to_power(power_dbm))))


def measure_power(signal: ComplexBaseband) -> float:
    """Mean power of ``signal`` in dBm."""
    if len(signal) == 0:
        raise UsageError("cannot measure the power of an empty signal")
    return float(power_to_dbm(signal.mean_power))


def measure_circularity(signal: ComplexBaseband) -> float:
    """|E[x^2]| / E[|x|^2]; zero for a proper (circular) signal, one for a real one."""
    x = signal.samples
    if x.size < 1000:
        raise UsageError(f"circularity needs at least 1000 samples, got {x.size}")
    return float(abs(np.mean(x * x)) / np.mean(np.abs(x) ** 2))


def complex_kurtosis(signal: ComplexBaseband) -> float:
    """E|x|^4 / (E|x|^2)^2, equal to 2 for circular complex Gaussian data."""
    a2 = np.abs(signal.samples) ** 2
    return float(np.mean(a2 ** 2) / np.mean(a2) ** 2)


def autocorrelation(signal: ComplexBaseband, lags) -> np.ndarray:
    """Normalized sample autocorrelation E[x(n+k) x*(n)] / E|x|^2 at the given lags."""
    x = signal.samples
    p = np.mean(np.abs(x) ** 2)
    out = []
    for k in np.atleast_1d(lags):
        k = int(k)
        out.append(np.mean(x[k:] * np.conj(x[: x.size - k])) / p)
    return np.asarray(out)
