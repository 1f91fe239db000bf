"""Closed-form estimation bounds and achievable-rate expressions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cancellation import ReferenceMatrix
from .errors import EstimationError, InfeasibleScenarioError, UsageError


@dataclass(frozen=True)
class NoiseProfile:
    """Digital-domain thermal noise and SoI powers (linear). ``sigma_r2 == 0`` is a calibration period."""

    sigma_n2: float
    sigma_r2: float = 0.0

    def __post_init__(self):
        if not self.sigma_n2 > 0:
            raise UsageError("sigma_n2 must be positive")
        if self.sigma_r2 < 0:
            raise UsageError("sigma_r2 must be non-negative")

    @property
    def total(self):
        return self.sigma_n2 + self.sigma_r2


@dataclass(frozen=True)
class RateScenario:
    n_c: int
    t_coh: float
    f_s: float
    snr: float
    sinr_c: float
    sinr_nc: float = 0.0

    @property
    def overhead(self):
        """Fraction of the coherence interval spent in half-duplex calibration."""
        return 2.0 * self.n_c / (self.t_coh * self.f_s)


def crlb_exact(X, noise: NoiseProfile) -> np.ndarray:
    """(X^H X)^-1 (sigma_n^2 + sigma_r^2) for a reference matrix or plain array."""
    A = np.asarray(X.data if isinstance(X, ReferenceMatrix) else X)
    G = A.conj().T @ A
    G = (G + G.conj().T) / 2
    try:
        c, low = scipy.linalg.cho_factor(G, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(f"reference matrix is rank deficient: {exc}") from None
    inv = scipy.linalg.cho_solve((c, low), np.eye(G.shape[0]), check_finite=False)
    if np.linalg.cond(G) > 1e20:
        raise EstimationError("reference matrix is numerically rank deficient")
    inv = (inv + inv.conj().T) / 2
    return inv * noise.total


def crlb_per_tap(n: int, p_ref: float, noise: NoiseProfile) -> float:
    """Per-tap bound for a white reference: (sigma_n^2 + sigma_r^2) / (n * p_ref)."""
    if n < 1 or not p_ref > 0:
        raise UsageError("need n >= 1 and p_ref > 0")
    return noise.total / (n * p_ref)


def required_sample_ratio(snr_linear: float) -> float:
    """N / N_c giving equal per-tap bounds without and with a calibration period."""
    if snr_linear < 0:
        raise UsageError("snr must be non-negative")
    return snr_linear + 1.0


def rate_no_calibration(sinr_nc: float) -> float:
    """Two-way rate (bits/s/Hz) when the SI channel is estimated during full-duplex operation."""
    if sinr_nc < 0:
        raise UsageError("sinr must be non-negative")
    return 2.0 * math.log2(1.0 + sinr_nc)


def rate_with_calibration(s: RateScenario) -> float:
    """Two-way rate with a half-duplex calibration window of 2*n_c samples per coherence time."""
    f = s.overhead
    if f > 1.0:
        raise InfeasibleScenarioError(
            f"calibration overhead {f:.3g} > 1: coherence time {s.t_coh:g} s too short for n_c={s.n_c}"
        )
    if f < 0 or s.snr < 0 or s.sinr_c < 0:
        raise UsageError("rate scenario values must be non-negative")
    return f * math.log2(1.0 + s.snr) + 2.0 * (1.0 - f) * math.log2(1.0 + s.sinr_c)


def calibration_crossover_tcoh(n_c: int, f_s: float, snr: float, sinr_c: float, sinr_nc: float) -> float:
    """Coherence time at which the calibrated and uncalibrated rates are equal.

    Returns ``nan`` when the rates never cross (calibration always better or
    always worse for every feasible coherence time).
    """
    full = 2.0 * math.log2(1.0 + sinr_c)
    half = math.log2(1.0 + snr)
    c_nc = rate_no_calibration(sinr_nc)
    if full <= half:
        return float("nan")
    f = (full - c_nc) / (full - half)
    if not 0.0 < f <= 1.0:
        return float("nan")
    return 2.0 * n_c / (f * f_s)
