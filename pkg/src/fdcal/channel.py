"""Self-interference coupling channels and the RF cancellation stage."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UsageError
from .waveform import ComplexBaseband


@dataclass(frozen=True)
class FirResponse:
    taps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "taps", np.asarray(self.taps, dtype=np.complex128).ravel())
        if self.taps.size < 1:
            raise UsageError("a FIR response needs at least one tap")

    def __len__(self):
        return self.taps.size

    @property
    def energy(self):
        return float(np.sum(np.abs(self.taps) ** 2))


@dataclass(frozen=True)
class MimoChannel:
    """SI responses indexed ``taps[rx, tx, k]``."""

    taps: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=np.complex128)
        if t.ndim != 3 or t.shape[2] < 1:
            raise UsageError(f"taps must have shape (n_rx, n_tx, M), got {t.shape}")
        object.__setattr__(self, "taps", t)

    @property
    def n_rx(self):
        return self.taps.shape[0]

    @property
    def n_tx(self):
        return self.taps.shape[1]

    @property
    def m(self):
        return self.taps.shape[2]

    def response(self, rx, tx):
        return FirResponse(self.taps[rx, tx])

    @property
    def responses(self):
        return [[self.response(i, j) for j in range(self.n_tx)] for i in range(self.n_rx)]

    def scaled(self, factor):
        return MimoChannel(self.taps * factor)


def tap_profile(m, dominant_fraction=0.9, decay_db=2.0):
    """Expected per-tap energy fractions (sum to one)."""
    if m == 1:
        return np.ones(1)
    tail = 10.0 ** (-decay_db * np.arange(1, m) / 10.0)
    tail = tail / tail.sum() * (1.0 - dominant_fraction)
    return np.concatenate([[dominant_fraction], tail])


def draw_si_channel(cfg, rng: np.random.Generator) -> MimoChannel:
    """Random SI channel for every TX->RX pair.

    Tap 0 has a fixed magnitude carrying ``dominant_tap_fraction`` of the link
    energy and a uniform random phase; the remaining taps are circular Gaussian
    with an exponentially decaying power profile. Each link's expected energy is
    ``-antenna_separation_db - 10*log10(n_tx)`` so the total SI power at each
    receive antenna is the per-chain transmit power minus the separation.
    """
    m = int(cfg.channel_len_m)
    if m < 1:
        raise UsageError("channel_len_m must be >= 1")
    n_rx, n_tx = cfg.n_rx, cfg.n_tx
    energy = 10.0 ** (-cfg.antenna_separation_db / 10.0) / n_tx
    prof = tap_profile(m, cfg.dominant_tap_fraction, cfg.tap_decay_db) * energy
    phase = rng.uniform(0.0, 2.0 * math.pi, size=(n_rx, n_tx))
    taps = np.empty((n_rx, n_tx, m), dtype=np.complex128)
    taps[:, :, 0] = math.sqrt(prof[0]) * np.exp(1j * phase)
    if m > 1:
        g = (rng.standard_normal((n_rx, n_tx, m - 1)) + 1j * rng.standard_normal((n_rx, n_tx, m - 1))) / math.sqrt(2)
        taps[:, :, 1:] = g * np.sqrt(prof[1:])
    return MimoChannel(taps)


def _check_inputs(channels, tx_signals):
    if len(tx_signals) != channels.n_tx:
        raise UsageError(f"expected {channels.n_tx} transmit signals, got {len(tx_signals)}")
    n = len(tx_signals[0])
    rate = tx_signals[0].sample_rate_hz
    for s in tx_signals:
        if len(s) != n:
            raise UsageError("transmit signals must have equal lengths")
        if s.sample_rate_hz != rate:
            raise UsageError("transmit signals must share a sample rate")
    return n, rate


def _convolve_rows(channels, tx_signals, rows):
    n, rate = _check_inputs(channels, tx_signals)
    out = []
    for i in rows:
        acc = np.zeros(n, dtype=np.complex128)
        for j, s in enumerate(tx_signals):
            acc += np.convolve(s.samples, channels.taps[i, j])[:n]
        out.append(ComplexBaseband(acc, rate))
    return out


def propagate(channels: MimoChannel, tx_signals: Sequence[ComplexBaseband]) -> list:
    """Causal MIMO convolution, output i = sum_j h_ij * x_j.

    Outputs keep the input length and assume zero signal before the first
    sample; the first ``M-1`` samples are therefore a start-up transient, which
    the estimator's windowing discards.
    """
    return _convolve_rows(channels, tx_signals, range(channels.n_rx))


def rf_cancel(rx_input: ComplexBaseband, tx_rf: Sequence[ComplexBaseband], channels: MimoChannel,
              suppression_db: float, rx_index: int = 0) -> ComplexBaseband:
    """Subtract a transmit replica that removes exactly ``suppression_db`` of SI power.

    The replica is the true SI contribution at ``rx_index`` scaled by
    ``1 - 10**(-suppression_db/20)``, which leaves the SI waveform unchanged in
    shape and attenuated by the configured amount. The signal of interest and
    any noise in ``rx_input`` pass through untouched.
    """
    if suppression_db < 0:
        raise UsageError("suppression_db must be non-negative")
    if suppression_db == 0:
        return rx_input
    (si,) = _convolve_rows(channels, tx_rf, [rx_index])
    return rx_input - si.scaled(1.0 - 10.0 ** (-suppression_db / 20.0))
