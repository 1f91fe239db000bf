"""One Monte-Carlo trial of the full-duplex link.

A trial owns one SI channel realization and one SINR measurement block. The
estimate is trained on a separate block (with or without the signal of
interest) and applied forward to the measurement block. Every random draw
comes from a named sub-stream of ``(seed, experiment, trial)`` so that the
calibrated and uncalibrated runs of the same trial, and runs with different
training lengths, share their channel and measurement block exactly.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from ..cancellation import Mode, build_reference_matrix, digital_cancel, ls_estimate, measure_sinr
from ..channel import MimoChannel, draw_si_channel, propagate, rf_cancel
from ..errors import FdcalError, StageError
from ..rf_chain import iq_coefficients, receive_chain, transmit_chain, tx_pa_input_scale
from ..waveform import ComplexBaseband, generate_soi, ofdm_waveform

_STREAMS = {
    "channel": 0,
    "meas_tx": 1,
    "meas_soi": 2,
    "meas_noise": 3,
    "train_tx": 4,
    "train_soi": 5,
    "train_noise": 6,
    "synthetic": 7,
}


def experiment_code(experiment_id):
    return zlib.crc32(str(experiment_id).encode())


def trial_entropy(seed, experiment_id, trial):
    return [int(seed) & (2 ** 64 - 1), experiment_code(experiment_id), int(trial)]


def substream(entropy, name, *index):
    """Generator for a named, independently seeded sub-stream of a trial."""
    ss = np.random.SeedSequence(entropy, spawn_key=(_STREAMS[name],) + tuple(index))
    return np.random.default_rng(ss)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except FdcalError as exc:
        raise StageError(name, exc) from exc


@dataclass
class Block:
    refs: list          # reference signals the canceller regresses on
    y: list             # receiver outputs (input-referred digital samples)
    soi: list           # ground-truth SoI contribution at each receiver


def simulate_block(cfg, channel: MimoChannel, n: int, with_soi: bool, entropy, prefix: str) -> Block:
    """Run ``n`` samples through TX chains, SI channel, RF cancellation and RX chains."""
    xs, rfs, refs_lin = [], [], []
    for j in range(cfg.n_tx):
        x = _stage("waveform", ofdm_waveform, cfg.ofdm, n, substream(entropy, prefix + "_tx", j))
        rf, ref = _stage("transmit_chain", transmit_chain, x, cfg)
        xs.append(x)
        rfs.append(rf)
        refs_lin.append(ref)
    si = _stage("propagate", propagate, channel, rfs)
    ys, sois = [], []
    power = cfg.soi_power_dbm if with_soi else -math.inf
    for i in range(cfg.n_rx):
        soi = _stage("soi", generate_soi, cfg.ofdm, power, n, substream(entropy, prefix + "_soi", i))
        after_rf = _stage("rf_cancel", rf_cancel, si[i] + soi, rfs, channel, cfg.rf_cancellation_db, rx_index=i)
        y = _stage("receive_chain", receive_chain, after_rf, cfg, substream(entropy, prefix + "_noise", i))
        ys.append(y)
        sois.append(soi)
    refs = refs_lin if cfg.mode is Mode.LINEAR else xs
    return Block(refs, ys, sois)


def effective_taps(cfg, channel: MimoChannel) -> np.ndarray:
    """True taps seen by the canceller, shape (K, n_rx) in the regressor's column layout."""
    a = 10.0 ** (-cfg.rf_cancellation_db / 20.0)
    if cfg.mode is Mode.LINEAR:
        scale = a * math.sqrt(10.0 ** (cfg.tx_power_dbm / 10.0))
        blocks = [[scale * channel.taps[:, j, :]] for j in range(cfg.n_tx)]
    else:
        g1, g2 = iq_coefficients(float(cfg.tx_iq.irr_db)) if cfg.impairments else (1.0, 0.0)
        c = a * tx_pa_input_scale(cfg) * 10.0 ** (cfg.pa.gain_db / 20.0)
        blocks = [[c * g1 * channel.taps[:, j, :], c * g2 * channel.taps[:, j, :]] for j in range(cfg.n_tx)]
    cols = [b for blk in blocks for b in blk]
    return np.concatenate(cols, axis=1).T


@dataclass
class TrialContext:
    cfg: object
    entropy: list
    channel: MimoChannel
    X_meas: object
    y_meas: np.ndarray      # (rows, n_rx)
    soi_meas: np.ndarray    # (rows, n_rx)
    h_true: np.ndarray


def prepare_trial(cfg, entropy) -> TrialContext:
    """Draw the channel and simulate the full-duplex measurement block of a trial."""
    cfg = cfg.effective()
    channel = draw_si_channel(cfg, substream(entropy, "channel"))
    L = cfg.measurement_len
    blk = simulate_block(cfg, channel, L, True, entropy, "meas")
    X = _stage("reference_matrix", build_reference_matrix, blk.refs, L, cfg.channel_len_m, cfg.mode)
    y = np.stack([X.window(s) for s in blk.y], axis=1)
    soi = np.stack([X.window(s) for s in blk.soi], axis=1)
    return TrialContext(cfg, entropy, channel, X, y, soi, effective_taps(cfg, channel))


@dataclass(frozen=True)
class TrialResult:
    sinr_db: float              # averaged over receive chains (dB)
    sinr_db_per_rx: tuple
    estimate_error_norm: float  # ||h_hat - h|| / ||h||


def train_and_measure(ctx: TrialContext, n: int, with_soi: bool) -> TrialResult:
    cfg = ctx.cfg
    if n <= cfg.channel_len_m:
        raise StageError("training", f"n={n} must exceed channel_len_m={cfg.channel_len_m}")
    blk = simulate_block(cfg, ctx.channel, n, with_soi, ctx.entropy, "train")
    X = _stage("reference_matrix", build_reference_matrix, blk.refs, n, cfg.channel_len_m, cfg.mode)
    Y = np.stack([X.window(s) for s in blk.y], axis=1)
    est = _stage("ls_estimate", ls_estimate, X, Y)
    rate = cfg.sample_rate_hz
    sinrs = []
    for i in range(cfg.n_rx):
        res = _stage("digital_cancel", digital_cancel, ctx.y_meas[:, i], ctx.X_meas, est.output(i))
        sinrs.append(measure_sinr(res, ComplexBaseband(ctx.soi_meas[:, i], rate)))
    err = np.linalg.norm(est.taps - ctx.h_true) / np.linalg.norm(ctx.h_true)
    return TrialResult(float(np.mean(sinrs)), tuple(sinrs), float(err))


def run_single_trial(cfg, n: int, with_soi: bool, rng_stream=None, experiment_id="trial", trial=0):
    """Full pipeline for one trial; returns ``(sinr_db, estimate_error_norm)``.

    ``rng_stream`` is the trial entropy: an int seed, a list of ints, or a
    ``numpy.random.SeedSequence``; by default it is derived from ``cfg.seed``.
    """
    if rng_stream is None:
        entropy = trial_entropy(cfg.seed, experiment_id, trial)
    elif isinstance(rng_stream, np.random.SeedSequence):
        entropy = rng_stream.entropy
    elif isinstance(rng_stream, (list, tuple)):
        entropy = list(rng_stream)
    else:
        entropy = trial_entropy(int(rng_stream), experiment_id, trial)
    ctx = prepare_trial(cfg, entropy)
    r = train_and_measure(ctx, n, with_soi)
    return r.sinr_db, r.estimate_error_norm
