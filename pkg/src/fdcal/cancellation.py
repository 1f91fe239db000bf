"""Least-squares SI channel estimation and digital cancellation.

The regressor is the covariance-windowed convolution matrix of the reference
signals: with ``N`` raw samples and ``M`` taps there are ``N-M+1`` rows and row
``r``, column ``k`` of transmitter block ``j`` holds ``x_j(M-1+r-k)``. The
widely-linear variant appends the conjugate of every block right after it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
import scipy.linalg
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EstimationError, UsageError
from .waveform import ComplexBaseband, power_to_dbm

COND_LIMIT = 1e10


class Mode(str, enum.Enum):
    LINEAR = "linear"
    WIDELY_LINEAR = "wl"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        aliases = {"linear": cls.LINEAR, "wl": cls.WIDELY_LINEAR, "widely_linear": cls.WIDELY_LINEAR,
                   "widelylinear": cls.WIDELY_LINEAR, "widely-linear": cls.WIDELY_LINEAR}
        if v not in aliases:
            raise UsageError(f"unknown mode {value!r}; use 'linear' or 'wl'")
        return aliases[v]


@dataclass(frozen=True)
class ReferenceMatrix:
    data: np.ndarray
    mode: Mode
    n: int
    m: int
    n_tx: int

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def blocks_per_tx(self):
        return 2 if self.mode is Mode.WIDELY_LINEAR else 1

    def block_label(self, col):
        b, _ = divmod(col, self.m)
        j, part = divmod(b, self.blocks_per_tx)
        return f"tx{j}" + ("/conj" if part else "")

    @cached_property
    def p_ref(self):
        """Mean column power, the constant in X^H X ~ N * p_ref * I."""
        return float(np.mean(np.abs(self.data) ** 2))

    def window(self, y):
        """Trim a length-``n`` received vector to the regressor's rows (drops the first M-1)."""
        arr = y.samples if isinstance(y, ComplexBaseband) else np.asarray(y)
        if arr.shape[0] == self.rows:
            return arr
        if arr.shape[0] == self.n:
            return arr[self.m - 1:]
        raise UsageError(f"received vector has {arr.shape[0]} samples; expected {self.n} or {self.rows}")


def _conv_matrix(x, n, m):
    return sliding_window_view(x[:n], m)[:, ::-1]


def build_reference_matrix(refs: Sequence[ComplexBaseband], n: int, m: int,
                           mode: Union[Mode, str] = Mode.LINEAR) -> ReferenceMatrix:
    mode = Mode.parse(mode)
    if m < 1 or m >= n:
        raise UsageError(f"need 1 <= m < n, got m={m}, n={n}")
    blocks = []
    for j, ref in enumerate(refs):
        x = ref.samples if isinstance(ref, ComplexBaseband) else np.asarray(ref, dtype=np.complex128)
        if x.size < n:
            raise UsageError(f"reference {j} has {x.size} samples, need {n}")
        b = _conv_matrix(x, n, m)
        blocks.append(b)
        if mode is Mode.WIDELY_LINEAR:
            blocks.append(np.conj(b))
    data = np.ascontiguousarray(np.concatenate(blocks, axis=1), dtype=np.complex128)
    return ReferenceMatrix(data, mode, n, m, len(refs))


@dataclass(frozen=True)
class ChannelEstimate:
    """LS taps in the regressor's column layout; 2-D when several outputs were solved at once."""

    taps: np.ndarray
    mode: Mode
    residual_power_dbm: Union[float, np.ndarray]
    m: int
    n_tx: int

    def output(self, i):
        """Estimate for one receive chain when solved jointly."""
        if self.taps.ndim == 1:
            return self
        res = np.atleast_1d(self.residual_power_dbm)[i]
        return ChannelEstimate(self.taps[:, i], self.mode, float(res), self.m, self.n_tx)

    def direct(self):
        """Direct-component taps, shape (n_tx, M[, outputs])."""
        t = self.taps.reshape((self.n_tx, -1, self.m) + self.taps.shape[1:])
        return t[:, 0]

    def image(self):
        if self.mode is not Mode.WIDELY_LINEAR:
            raise UsageError("only widely-linear estimates have image taps")
        t = self.taps.reshape((self.n_tx, 2, self.m) + self.taps.shape[1:])
        return t[:, 1]


def _rank_diagnostic(X: ReferenceMatrix):
    worst, label = 0.0, "?"
    for c0 in range(0, X.cols, X.m):
        blk = X.data[:, c0:c0 + X.m]
        c = np.linalg.cond(blk)
        if not np.isfinite(c) or c > worst:
            worst, label = c, X.block_label(c0)
            if not np.isfinite(c):
                break
    return label, worst


def ls_estimate(X: ReferenceMatrix, y) -> ChannelEstimate:
    """Least-squares taps minimizing ||y - X h||^2, via QR of the augmented matrix [X | y].

    ``y`` may be a ComplexBaseband or array of length ``n`` (windowed here) or of
    the regressor's row count; a 2-D array solves every column jointly.
    """
    yw = np.asarray(X.window(y), dtype=np.complex128)
    single = yw.ndim == 1
    Y = yw[:, None] if single else yw
    k = X.cols
    if X.rows < k:
        raise EstimationError(f"{X.rows} equations for {k} unknowns; increase n")
    aug = np.concatenate([X.data, Y], axis=1)
    r = scipy.linalg.qr(aug, mode="r", overwrite_a=True, check_finite=False)[0]
    R = r[:k, :k]
    d = np.abs(np.diag(R))
    cond = np.inf if d.min() == 0 else np.linalg.cond(R)
    if not cond < COND_LIMIT:
        label, bc = _rank_diagnostic(X)
        raise EstimationError(
            f"reference matrix is rank deficient (cond={cond:.3g}); worst block {label} (cond={bc:.3g})"
        )
    h = scipy.linalg.solve_triangular(R, r[:k, k:], check_finite=False)
    resid = Y - X.data @ h
    res_dbm = power_to_dbm(np.mean(np.abs(resid) ** 2, axis=0))
    if single:
        return ChannelEstimate(h[:, 0], X.mode, float(res_dbm[0]), X.m, X.n_tx)
    return ChannelEstimate(h, X.mode, res_dbm, X.m, X.n_tx)


def digital_cancel(y_adc, X: ReferenceMatrix, est: ChannelEstimate) -> ComplexBaseband:
    """Windowed ``y_adc`` minus the reconstructed SI ``X @ h``."""
    if est.taps.ndim != 1:
        raise UsageError("select one output with est.output(i) before cancelling")
    if est.taps.size != X.cols or est.mode is not X.mode:
        raise UsageError(f"estimate layout ({est.mode.value}, {est.taps.size}) does not match "
                         f"reference matrix ({X.mode.value}, {X.cols})")
    yw = X.window(y_adc)
    rate = y_adc.sample_rate_hz if isinstance(y_adc, ComplexBaseband) else 1.0
    return ComplexBaseband(yw - X.data @ est.taps, rate)


def measure_sinr(residual: ComplexBaseband, soi_component: ComplexBaseband) -> float:
    """SoI power over the power of everything else in ``residual``, in dB.

    Returns ``inf`` when the residual is exactly the signal of interest.
    """
    if len(residual) != len(soi_component):
        raise UsageError("residual and SoI component must have equal lengths")
    s = np.mean(np.abs(soi_component.samples) ** 2)
    i_n = np.mean(np.abs(residual.samples - soi_component.samples) ** 2)
    if i_n == 0:
        return float("inf")
    return float(10.0 * np.log10(s / i_n)) if s > 0 else float("-inf")
