"""Transmitter and receiver analog impairments.

All stages are memoryless complex-baseband models working in the package's
power convention (mean-square amplitude 1.0 == 0 dBm):

* IQ imbalance ``y = g1*x + g2*conj(x)`` with ``|g1/g2|^2`` equal to the IRR,
* amplifier/mixer polynomial ``y = G*(x + a2*|x|^2 + a3*x*|x|^2)`` with the
  coefficients set from the two-tone intercept points,
* one equivalent thermal noise source at the receiver input,
* a uniform mid-rise ADC quantizing I and Q independently.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, RangeWarning
from .waveform import ComplexBaseband, dbm_to_power, power_to_dbm

log = logging.getLogger(__name__)

THERMAL_NOISE_DBM_PER_HZ = -174.0


@dataclass(frozen=True)
class RfStageParams:
    gain_db: float
    iip2_dbm: Optional[float] = None
    iip3_dbm: Optional[float] = None
    nf_db: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.gain_db):
            raise ConfigError("gain_db must be finite")
        if self.nf_db < 0:
            raise ConfigError("nf_db must be non-negative")
        for name in ("iip2_dbm", "iip3_dbm"):
            v = getattr(self, name)
            if v is not None and (math.isnan(v) or v == -math.inf):
                raise ConfigError(f"{name} must be a real number or absent")

    def linear(self):
        """The same stage with its nonlinear terms removed."""
        return replace(self, iip2_dbm=None, iip3_dbm=None)


@dataclass(frozen=True)
class IqImbalanceParams:
    irr_db: float

    def __post_init__(self):
        if not self.irr_db > 0:
            raise ConfigError("irr_db must be positive")


@dataclass(frozen=True)
class AdcParams:
    bits: int = 12
    papr_headroom_db: float = 10.0
    # absolute full-scale level used by the receive chain's gain control
    full_scale_dbm: float = 10.0

    def __post_init__(self):
        if not 1 <= self.bits <= 24:
            raise ConfigError("ADC bits must lie in 1..24")


@lru_cache(maxsize=64)
def iq_coefficients(irr_db: float):
    """Direct and image gains ``(g1, g2)`` for a given image rejection ratio.

    Amplitude mismatch ``eps`` and phase mismatch ``phi`` (radians) are taken
    equal, then ``g1`` is normalized to exactly 1.
    """
    if math.isinf(irr_db):
        return 1.0 + 0j, 0j
    target = 10.0 ** (-irr_db / 10.0)

    def k12(phi):
        g = 1.0 + phi
        k1 = (1.0 + g * np.exp(-1j * phi)) / 2.0
        k2 = (1.0 - g * np.exp(1j * phi)) / 2.0
        return k1, k2

    def f(phi):
        k1, k2 = k12(phi)
        return abs(k2) ** 2 / abs(k1) ** 2 - target

    if f(1e-12) >= 0:
        # mismatch too small to resolve; k2/k1 -> -phi(1+j)/2 in the small-angle limit
        return 1.0 + 0j, complex(math.sqrt(target) * np.exp(-0.75j * math.pi))
    # the image-to-direct ratio rises monotonically from 0 to 1 (0 dB) on this bracket
    phi = brentq(f, 1e-12, math.pi / 2, xtol=1e-15, rtol=1e-14)
    k1, k2 = k12(phi)
    g2 = k2 / k1
    # pin |g2| exactly so the measured IRR does not carry the root-finder tolerance
    g2 = g2 / abs(g2) * math.sqrt(target)
    return 1.0 + 0j, complex(g2)


def apply_iq_imbalance(signal: ComplexBaseband, p: IqImbalanceParams) -> ComplexBaseband:
    g1, g2 = iq_coefficients(float(p.irr_db))
    if g2 == 0:
        return signal
    x = signal.samples
    return signal.replace(g1 * x + g2 * np.conj(x))


def polynomial_coefficients(p: RfStageParams):
    """``(G, a2, a3)`` of the memoryless stage polynomial.

    For complex-baseband two-tone input of per-tone power P the third-order
    products have power ``|a3|^2 P^3`` and the second-order ones ``a2^2 P^2``,
    so the intercepts are ``P = 1/|a3|`` and ``P = 1/a2^2``.
    """
    g = 10.0 ** (p.gain_db / 20.0)
    a2 = 0.0 if p.iip2_dbm is None or math.isinf(p.iip2_dbm) else 1.0 / math.sqrt(float(dbm_to_power(p.iip2_dbm)))
    a3 = 0.0 if p.iip3_dbm is None or math.isinf(p.iip3_dbm) else -1.0 / float(dbm_to_power(p.iip3_dbm))
    return g, a2, a3


def apply_nonlinear_stage(signal: ComplexBaseband, p: RfStageParams) -> ComplexBaseband:
    g, a2, a3 = polynomial_coefficients(p)
    x = signal.samples
    y = x
    if a2 or a3:
        m2 = np.abs(x) ** 2
        y = x + a2 * m2 + a3 * x * m2
    return signal.replace(g * y)


def noise_power_dbm(nf_db, bandwidth_hz):
    return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(bandwidth_hz) + nf_db


def add_thermal_noise(signal: ComplexBaseband, nf_db: float, bandwidth_hz: float,
                      rng: np.random.Generator) -> ComplexBaseband:
    """Add circular white Gaussian noise of power kTB*F (in dBm, total over the sample band)."""
    if not bandwidth_hz > 0:
        raise ConfigError("bandwidth_hz must be positive")
    sigma = math.sqrt(float(dbm_to_power(noise_power_dbm(nf_db, bandwidth_hz))) / 2.0)
    n = len(signal)
    z = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return signal.replace(signal.samples + z)


def quantize_adc(signal: ComplexBaseband, p: AdcParams, full_scale: Optional[float] = None) -> ComplexBaseband:
    """Uniform mid-rise quantizer applied to I and Q separately.

    ``full_scale`` is the clipping amplitude of each rail. When omitted it is
    derived from the input: RMS amplitude times the PAPR headroom.
    """
    x = signal.samples
    if not np.any(x):
        return signal
    if full_scale is None:
        full_scale = math.sqrt(np.mean(np.abs(x) ** 2)) * 10.0 ** (p.papr_headroom_db / 20.0)
    step = 2.0 * full_scale / 2 ** p.bits
    top = full_scale - step / 2.0

    def q(v):
        return np.clip(step * (np.floor(v / step) + 0.5), -top, top)

    return signal.replace(q(x.real) + 1j * q(x.imag))


# -- chains -----------------------------------------------------------------


def tx_pa_input_scale(cfg):
    """Amplitude applied ahead of the PA so the nominal output hits ``tx_power_dbm``."""
    g1, g2 = iq_coefficients(float(cfg.tx_iq.irr_db)) if cfg.impairments else (1.0, 0.0)
    p_in = float(dbm_to_power(cfg.tx_power_dbm - cfg.pa.gain_db))
    return math.sqrt(p_in / (abs(g1) ** 2 + abs(g2) ** 2))


def transmit_chain(x: ComplexBaseband, cfg):
    """PA(IQ_tx(x)) at the configured transmit power.

    Returns ``(rf_out, tx_ref)`` where ``tx_ref`` is ``rf_out`` divided by the
    nominal transmit amplitude, i.e. the transmitter-output reference tap. The
    scaling is nominal rather than measured so that every block sees the same
    effective channel.
    """
    s = apply_iq_imbalance(x, cfg.tx_iq) if cfg.impairments else x
    s = s.scaled(tx_pa_input_scale(cfg))
    pa = cfg.pa if cfg.impairments else cfg.pa.linear()
    rf_out = apply_nonlinear_stage(s, pa)
    tx_ref = rf_out.scaled(1.0 / math.sqrt(float(dbm_to_power(cfg.tx_power_dbm))))
    return rf_out, tx_ref


def agc_gain_db(power_dbm, cfg):
    """VGA gain that puts the ADC input RMS at full scale minus the PAPR headroom."""
    lo, hi = cfg.vga_gain_range_db
    target = cfg.adc.full_scale_dbm - cfg.adc.papr_headroom_db
    gain = target - power_dbm
    if not lo <= gain <= hi:
        clamped = min(max(gain, lo), hi)
        msg = f"required VGA gain {gain:.1f} dB outside [{lo}, {hi}] dB; clamped to {clamped:.1f} dB"
        log.warning(msg)
        warnings.warn(msg, RangeWarning, stacklevel=3)
        gain = clamped
    return gain


def receive_chain(y_rf: ComplexBaseband, cfg, rng: np.random.Generator,
                  add_noise: bool = True, return_gain: bool = False):
    """ADC(VGA(Mixer_IQ(LNA(y_rf + noise)))).

    The digital samples are returned referred back to the receiver input (the
    known LNA, mixer and VGA gains are divided out), so digital-domain powers
    read directly in antenna dBm. With ``return_gain=True`` the total analog
    gain in dB is returned as well.
    """
    imp = cfg.impairments
    s = add_thermal_noise(y_rf, cfg.noise_figure_db, cfg.ofdm.bandwidth_hz, rng) if add_noise else y_rf
    lna = cfg.lna if imp else cfg.lna.linear()
    mixer = cfg.mixer if imp else cfg.mixer.linear()
    s = apply_nonlinear_stage(s, lna)
    s = apply_nonlinear_stage(s, mixer)
    if imp:
        s = apply_iq_imbalance(s, cfg.rx_iq)
    p_vga_in = s.mean_power
    gain_vga = agc_gain_db(float(power_to_dbm(p_vga_in)), cfg) if p_vga_in > 0 else cfg.vga_gain_range_db[0]
    vga = replace(cfg.vga if imp else cfg.vga.linear(), gain_db=gain_vga)
    s = apply_nonlinear_stage(s, vga)
    if imp:
        fs = math.sqrt(float(dbm_to_power(cfg.adc.full_scale_dbm)))
        s = quantize_adc(s, cfg.adc, full_scale=fs)
    total_db = lna.gain_db + mixer.gain_db + gain_vga
    out = s.scaled(10.0 ** (-total_db / 20.0))
    return (out, total_db) if return_gain else out
