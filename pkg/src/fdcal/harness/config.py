"""Transceiver configuration and its INI-style text format.

Every section mirrors a row group of the reference parameter tables and every
key carries its unit in its name. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

from ..cancellation import Mode
from ..errors import ConfigError
from ..rf_chain import AdcParams, IqImbalanceParams, RfStageParams, noise_power_dbm
from ..waveform import OfdmParams


@dataclass(frozen=True)
class TransceiverConfig:
    ofdm: OfdmParams = field(default_factory=OfdmParams)
    tx_iq: IqImbalanceParams = field(default_factory=lambda: IqImbalanceParams(25.0))
    rx_iq: IqImbalanceParams = field(default_factory=lambda: IqImbalanceParams(60.0))
    pa: RfStageParams = field(default_factory=lambda: RfStageParams(27.0, None, 15.0, 5.0))
    lna: RfStageParams = field(default_factory=lambda: RfStageParams(25.0, None, 5.0, 4.1))
    mixer: RfStageParams = field(default_factory=lambda: RfStageParams(6.0, 50.0, 15.0, 4.0))
    vga: RfStageParams = field(default_factory=lambda: RfStageParams(0.0, 50.0, 20.0, 4.0))
    vga_gain_range_db: Tuple[float, float] = (0.0, 69.0)
    adc: AdcParams = field(default_factory=AdcParams)
    tx_power_dbm: float = 10.0
    antenna_separation_db: float = 40.0
    rf_cancellation_db: float = 30.0
    soi_power_dbm: float = -84.9
    noise_figure_db: float = 4.1
    n_tx: int = 2
    n_rx: int = 2
    channel_len_m: int = 16
    dominant_tap_fraction: float = 0.9
    tap_decay_db: float = 2.0
    seed: int = 1
    mode: Mode = Mode.LINEAR
    impairments: bool = True
    measurement_len: int = 8192
    estimation_rate: str = "symbol"

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ConfigError("n_tx and n_rx must be positive")
        if self.channel_len_m < 1:
            raise ConfigError("channel_len_m must be >= 1")
        if not 0.0 < self.dominant_tap_fraction <= 1.0:
            raise ConfigError("dominant_tap_fraction must lie in (0, 1]")
        if self.rf_cancellation_db < 0:
            raise ConfigError("rf_cancellation_db must be non-negative")
        lo, hi = self.vga_gain_range_db
        if lo > hi:
            raise ConfigError("vga gain range is empty")
        if self.measurement_len <= self.channel_len_m:
            raise ConfigError("measurement_len must exceed channel_len_m")
        if self.estimation_rate not in ("oversampled", "symbol"):
            raise ConfigError("estimation_rate must be 'oversampled' or 'symbol'")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "mode", Mode.parse(self.mode))

    @property
    def sample_rate_hz(self):
        return self.ofdm.sample_rate_hz

    @property
    def noise_floor_dbm(self):
        return noise_power_dbm(self.noise_figure_db, self.ofdm.bandwidth_hz)

    @property
    def snr_db(self):
        """Digital-domain SoI-to-thermal-noise ratio implied by the link budget."""
        return self.soi_power_dbm - self.noise_floor_dbm

    @property
    def snr_linear(self):
        return 10.0 ** (self.snr_db / 10.0)

    def with_(self, **changes):
        return replace(self, **changes)

    def at_symbol_rate(self):
        """The same link simulated without oversampling."""
        os_ = self.ofdm.oversampling
        ofdm = replace(self.ofdm, oversampling=1, sample_rate_hz=self.ofdm.sample_rate_hz / os_)
        return replace(self, ofdm=ofdm, estimation_rate="symbol")

    def effective(self):
        """Config actually simulated, honouring ``estimation_rate``."""
        if self.estimation_rate == "symbol" and self.ofdm.oversampling != 1:
            return self.at_symbol_rate()
        return self

    def to_text(self):
        return dump_config(self)

    @property
    def config_hash(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]


# section -> key -> (attribute path, kind)
_SCHEMA = {
    "system": {
        "tx_power_dbm": ("tx_power_dbm", float),
        "antenna_separation_db": ("antenna_separation_db", float),
        "rf_cancellation_db": ("rf_cancellation_db", float),
        "soi_power_dbm": ("soi_power_dbm", float),
        "noise_figure_db": ("noise_figure_db", float),
        "bandwidth_hz": ("ofdm.bandwidth_hz", float),
        "sample_rate_hz": ("ofdm.sample_rate_hz", float),
        "n_tx": ("n_tx", int),
        "n_rx": ("n_rx", int),
    },
    "ofdm": {
        "n_subcarriers": ("ofdm.n_subcarriers", int),
        "cp_len_samples": ("ofdm.cp_len", int),
        "constellation": ("ofdm.constellation", str),
        "oversampling": ("ofdm.oversampling", int),
    },
    "iq": {
        "tx_irr_db": ("tx_iq.irr_db", float),
        "rx_irr_db": ("rx_iq.irr_db", float),
    },
    "pa": {
        "gain_db": ("pa.gain_db", float),
        "iip2_dbm": ("pa.iip2_dbm", "opt"),
        "iip3_dbm": ("pa.iip3_dbm", "opt"),
        "nf_db": ("pa.nf_db", float),
    },
    "lna": {
        "gain_db": ("lna.gain_db", float),
        "iip2_dbm": ("lna.iip2_dbm", "opt"),
        "iip3_dbm": ("lna.iip3_dbm", "opt"),
        "nf_db": ("lna.nf_db", float),
    },
    "mixer": {
        "gain_db": ("mixer.gain_db", float),
        "iip2_dbm": ("mixer.iip2_dbm", "opt"),
        "iip3_dbm": ("mixer.iip3_dbm", "opt"),
        "nf_db": ("mixer.nf_db", float),
    },
    "vga": {
        "gain_min_db": ("vga_gain_range_db.0", float),
        "gain_max_db": ("vga_gain_range_db.1", float),
        "iip2_dbm": ("vga.iip2_dbm", "opt"),
        "iip3_dbm": ("vga.iip3_dbm", "opt"),
        "nf_db": ("vga.nf_db", float),
    },
    "adc": {
        "bits": ("adc.bits", int),
        "papr_headroom_db": ("adc.papr_headroom_db", float),
        "full_scale_dbm": ("adc.full_scale_dbm", float),
    },
    "channel": {
        "channel_len_m": ("channel_len_m", int),
        "dominant_tap_fraction": ("dominant_tap_fraction", float),
        "tap_decay_db": ("tap_decay_db", float),
    },
    "simulation": {
        "seed": ("seed", int),
        "mode": ("mode", str),
        "impairments": ("impairments", bool),
        "measurement_len": ("measurement_len", int),
        "estimation_rate": ("estimation_rate", str),
    },
}

_GROUPS = {"ofdm", "tx_iq", "rx_iq", "pa", "lna", "mixer", "vga", "adc"}


def _parse_value(section, key, raw, kind):
    s = raw.strip()
    try:
        if kind == "opt":
            return None if s.lower() in ("none", "-", "") else float(s)
        if kind is bool:
            if s.lower() in ("1", "true", "yes", "on"):
                return True
            if s.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if kind is int:
            return int(s, 0)
        if kind is float:
            return float(s)
        return s
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def _get(cfg, path):
    obj = cfg
    for part in path.split("."):
        obj = obj[int(part)] if part.isdigit() else getattr(obj, part)
    return obj


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Mode):
        return v.value
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def dump_config(cfg: TransceiverConfig) -> str:
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (path, _) in keys.items():
            lines.append(f"{key} = {_fmt(_get(cfg, path))}")
        lines.append("")
    return "\n".join(lines)


def parse_config(text: str, base: Optional[TransceiverConfig] = None) -> TransceiverConfig:
    """Build a config from INI text; missing keys fall back to ``base`` (the defaults)."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    top = {}
    groups = {}
    vga_range = list((base or TransceiverConfig()).vga_gain_range_db)
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key [{section}] {key}")
            path, kind = _SCHEMA[section][key]
            value = _parse_value(section, key, raw, kind)
            head, _, attr = path.partition(".")
            if head == "vga_gain_range_db":
                vga_range[int(attr)] = value
            elif head in _GROUPS:
                groups.setdefault(head, {})[attr] = value
            else:
                top[head] = value

    cfg = base or TransceiverConfig()
    try:
        for name, changes in groups.items():
            top[name] = replace(getattr(cfg, name), **changes)
        top["vga_gain_range_db"] = tuple(vga_range)
        return replace(cfg, **top)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path) -> TransceiverConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def default_config_text() -> str:
    return resources.files("fdcal").joinpath("data/default.ini").read_text(encoding="utf-8")


def default_config() -> TransceiverConfig:
    return parse_config(default_config_text())
