"""Monte-Carlo experiments: sample-size ratio search, coherence-time rate sweep, CRLB validation."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..analysis import (NoiseProfile, RateScenario, crlb_per_tap, rate_no_calibration, rate_with_calibration,
                        required_sample_ratio)
from ..cancellation import Mode, build_reference_matrix, ls_estimate
from ..errors import InfeasibleScenarioError, UsageError
from ..waveform import ComplexBaseband
from .pipeline import prepare_trial, substream, train_and_measure, trial_entropy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentRecord:
    """One result row. ``values`` holds the independent variables and measured outputs."""

    experiment: str
    config_hash: str
    seed: int
    trials: int
    values: Dict[str, object] = field(default_factory=dict)
    flags: Tuple[str, ...] = ()

    def __getitem__(self, key):
        return self.values[key]


# -- trial execution ---------------------------------------------------------


def _trial_sinrs(args):
    cfg, experiment_id, trial_ids, points = args
    out = []
    for t in trial_ids:
        ctx = prepare_trial(cfg, trial_entropy(cfg.seed, experiment_id, t))
        out.append([train_and_measure(ctx, n, soi).sinr_db for n, soi in points])
    return out


def _chunks(seq, k):
    k = max(1, min(k, len(seq)))
    size = -(-len(seq) // k)
    return [seq[i:i + size] for i in range(0, len(seq), size)]


class TrialRunner:
    """Evaluates mean SINR over a fixed set of trials, memoizing per (n, with_soi).

    Trial ``t`` always sees the same channel and measurement block regardless
    of ``n``, mode of training or worker assignment; results are gathered in
    trial order, so serial and parallel runs are identical.
    """

    def __init__(self, cfg, experiment_id, trials, parallel=1):
        if trials < 1:
            raise UsageError("trials must be >= 1")
        self.cfg = cfg
        self.experiment_id = experiment_id
        self.trials = trials
        self.parallel = max(1, int(parallel or 1))
        self._cache = {}
        self._ctx = None

    def _contexts(self):
        if self._ctx is None:
            self._ctx = [prepare_trial(self.cfg, trial_entropy(self.cfg.seed, self.experiment_id, t))
                         for t in range(self.trials)]
        return self._ctx

    def sinr_samples(self, points):
        """Per-trial SINR (dB) for each ``(n, with_soi)`` point; shape (trials, len(points))."""
        points = [(int(n), bool(s)) for n, s in points]
        todo = [p for p in dict.fromkeys(points) if p not in self._cache]
        if todo:
            if self.parallel == 1:
                res = [[train_and_measure(ctx, n, s).sinr_db for n, s in todo] for ctx in self._contexts()]
            else:
                jobs = [(self.cfg, self.experiment_id, ids, todo)
                        for ids in _chunks(list(range(self.trials)), self.parallel)]
                with ProcessPoolExecutor(max_workers=self.parallel) as ex:
                    res = [row for part in ex.map(_trial_sinrs, jobs) for row in part]
            arr = np.asarray(res, dtype=float)
            for k, p in enumerate(todo):
                self._cache[p] = arr[:, k]
        return np.stack([self._cache[p] for p in points], axis=1)

    def mean_sinr(self, n, with_soi):
        return float(np.mean(self.sinr_samples([(n, with_soi)])[:, 0]))


# -- sample-size ratio -------------------------------------------------------


def _matches(f, target, tol_db):
    if math.isinf(f) and math.isinf(target):
        return f == target
    return abs(f - target) <= tol_db


def match_sample_size(runner: TrialRunner, target: float, n_guess: int, with_soi=True,
                      tol_db=1e-3, rel_tol=0.01, max_iter=20, n_min=None, n_max=None):
    """Smallest N whose mean SINR reaches ``target``, by bisection in log N.

    Returns ``(n, sinr_at_n, flags)``. The answer is refined by log-linear
    interpolation inside the final bracket. ``saturated`` is flagged when even
    ``n_max`` does not reach the target.
    """
    cfg = runner.cfg
    n_min = n_min or cfg.channel_len_m * (4 if cfg.mode is Mode.WIDELY_LINEAR else 2) * cfg.n_tx + 1
    n_max = n_max or max(64 * n_guess, n_min + 1)
    f = lambda n: runner.mean_sinr(n, with_soi)

    lo = max(n_min, int(round(n_guess / 1.5)))
    hi = max(lo + 1, int(round(n_guess * 1.5)))
    f_lo, f_hi = f(lo), f(hi)
    while f_lo > target and lo > n_min:
        hi, f_hi = lo, f_lo
        lo = max(n_min, lo // 2)
        f_lo = f(lo)
    if f_lo >= target:
        return lo, f_lo, ("below_range",) if f_lo > target else ()
    while f_hi < target:
        if hi >= n_max:
            return hi, f_hi, ("saturated",)
        lo, f_lo = hi, f_hi
        hi = min(n_max, hi * 2)
        f_hi = f(hi)

    for _ in range(max_iter):
        if hi / lo <= 1.0 + rel_tol or hi - lo <= 1:
            break
        mid = int(round(math.sqrt(lo * hi)))
        if mid in (lo, hi):
            break
        f_mid = f(mid)
        if _matches(f_mid, target, tol_db):
            return mid, f_mid, ()
        if f_mid < target:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    if _matches(f_hi, target, tol_db) or not (np.isfinite(f_lo) and np.isfinite(f_hi)) or f_hi == f_lo:
        return hi, f_hi, ()
    w = (target - f_lo) / (f_hi - f_lo)
    n = math.exp(math.log(lo) + w * (math.log(hi) - math.log(lo)))
    return n, target, ()


def run_ratio_experiment(cfg, nc_values: Sequence[int], trials: int = 50, parallel: int = 1,
                         experiment_id: str = "ratio", search_with_soi: bool = True,
                         tol_db: float = 1e-3, rel_tol: float = 0.01) -> list:
    """For each N_c: calibrated mean SINR, then the uncalibrated N reaching the same SINR."""
    if not nc_values:
        raise UsageError("nc_values must be non-empty")
    if trials < 10:
        raise UsageError("the ratio search needs at least 10 trials per point")
    cfg_eff = cfg.effective()
    runner = TrialRunner(cfg, experiment_id, trials, parallel)
    snr = cfg_eff.snr_linear
    predicted = required_sample_ratio(snr if search_with_soi else 0.0)
    records = []
    for nc in nc_values:
        target = runner.mean_sinr(nc, False)
        n, _, flags = match_sample_size(runner, target, int(round(nc * predicted)), with_soi=search_with_soi,
                                        tol_db=tol_db, rel_tol=rel_tol)
        ratio = float("nan") if "saturated" in flags else n / nc
        log.info("ratio nc=%d target=%.3f dB n=%.1f ratio=%.3f %s", nc, target, n, ratio, flags)
        records.append(ExperimentRecord(
            experiment_id, cfg.config_hash, cfg.seed, trials,
            {"mode": cfg.mode.value, "snr_db": cfg_eff.snr_db, "n_c": int(nc), "n": float(n),
             "ratio": ratio, "predicted_ratio": predicted, "sinr_db": target},
            tuple(flags)))
    return records


# -- achievable rates ---------------------------------------------------------


def run_rate_experiment(cfg, n_values: Sequence[int], t_coh_grid: Sequence[float], trials: int = 50,
                        parallel: int = 1, experiment_id: str = "rates") -> list:
    """Calibrated and uncalibrated rates over a coherence-time grid, one row per (N, T_coh)."""
    if not n_values or not len(t_coh_grid):
        raise UsageError("n_values and t_coh_grid must be non-empty")
    cfg_eff = cfg.effective()
    runner = TrialRunner(cfg, experiment_id, trials, parallel)
    runner.sinr_samples([(n, s) for n in n_values for s in (False, True)])
    snr = cfg_eff.snr_linear
    fs = cfg_eff.sample_rate_hz
    records = []
    for n in n_values:
        s_c = runner.mean_sinr(n, False)
        s_nc = runner.mean_sinr(n, True)
        lin_c, lin_nc = 10.0 ** (s_c / 10.0), 10.0 ** (s_nc / 10.0)
        c_nc = rate_no_calibration(lin_nc)
        for t in t_coh_grid:
            flags = ()
            try:
                c_c = rate_with_calibration(RateScenario(int(n), float(t), fs, snr, lin_c, lin_nc))
            except InfeasibleScenarioError:
                c_c, flags = float("nan"), ("infeasible",)
            records.append(ExperimentRecord(
                experiment_id, cfg.config_hash, cfg.seed, trials,
                {"n": int(n), "t_coh_s": float(t), "c_cal": c_c, "c_nocal": c_nc,
                 "sinr_c_db": s_c, "sinr_nc_db": s_nc, "snr_db": cfg_eff.snr_db, "f_s": fs},
                flags))
    return records


# -- single operating point ---------------------------------------------------


def run_trial_experiment(cfg, n: int, trials: int = 1, experiment_id: str = "trial") -> list:
    """Mean SINR and relative tap error at one N, with and without a calibration period."""
    if trials < 1:
        raise UsageError("trials must be >= 1")
    acc = {False: [], True: []}
    for t in range(trials):
        ctx = prepare_trial(cfg, trial_entropy(cfg.seed, experiment_id, t))
        for soi in (False, True):
            r = train_and_measure(ctx, int(n), soi)
            acc[soi].append((r.sinr_db, r.estimate_error_norm))
    records = []
    for soi in (False, True):
        arr = np.asarray(acc[soi])
        records.append(ExperimentRecord(
            experiment_id, cfg.config_hash, cfg.seed, trials,
            {"mode": cfg.mode.value, "n": int(n), "with_soi": soi,
             "sinr_db": float(np.mean(arr[:, 0])), "estimate_error_norm": float(np.mean(arr[:, 1]))},
            ()))
    return records


# -- CRLB validation ----------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Idealized estimation problem: white circular Gaussian reference, noise and SoI."""

    m: int = 8
    n_tx: int = 1
    sigma_n2: float = 1.0
    sir_factors: Tuple[float, ...] = (0.0, 10.0)   # sigma_r^2 / sigma_n^2 per profile
    p_ref: float = 1.0
    seed: int = 1
    mode: Mode = Mode.LINEAR

    @property
    def config_hash(self):
        import hashlib
        return hashlib.sha256(repr(self).encode()).hexdigest()[:12]


def _cgauss(rng, n, power):
    return math.sqrt(power / 2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def synthetic_trial_error(cfg: SyntheticConfig, n: int, sigma_r2: float, entropy):
    """LS tap error ``h_hat - h`` of one synthetic trial."""
    rng = substream(entropy, "synthetic")
    refs = [ComplexBaseband(_cgauss(rng, n, cfg.p_ref), 1.0) for _ in range(cfg.n_tx)]
    X = build_reference_matrix(refs, n, cfg.m, cfg.mode)
    h = _cgauss(rng, X.cols, 1.0)
    y = X.data @ h
    if cfg.sigma_n2 > 0:
        y = y + _cgauss(rng, X.rows, cfg.sigma_n2)
    if sigma_r2 > 0:
        y = y + _cgauss(rng, X.rows, sigma_r2)
    return ls_estimate(X, y).taps - h


def _crlb_chunk(args):
    cfg, n, sigma_r2, profile, trial_ids = args
    return [synthetic_trial_error(cfg, n, sigma_r2, trial_entropy(cfg.seed, f"crlb/{n}/{profile}", t))
            for t in trial_ids]


def run_crlb_validation(cfg_synthetic: SyntheticConfig, n_grid: Sequence[int], trials: int = 1000,
                        parallel: int = 1, experiment_id: str = "crlb") -> list:
    """Monte-Carlo per-tap LS variance against the white-reference bound, for each N and noise profile."""
    cfg = cfg_synthetic
    records = []
    for profile, factor in enumerate(cfg.sir_factors):
        sigma_r2 = factor * cfg.sigma_n2
        for n in n_grid:
            ids = list(range(trials))
            jobs = [(cfg, int(n), sigma_r2, profile, c) for c in _chunks(ids, parallel)]
            if parallel > 1:
                with ProcessPoolExecutor(max_workers=parallel) as ex:
                    errs = [e for part in ex.map(_crlb_chunk, jobs) for e in part]
            else:
                errs = [e for job in jobs for e in _crlb_chunk(job)]
            errs = np.asarray(errs)
            per_tap = np.mean(np.abs(errs) ** 2, axis=0)
            variance = float(np.mean(per_tap))
            if cfg.sigma_n2 > 0:
                bound = crlb_per_tap(int(n), cfg.p_ref, NoiseProfile(cfg.sigma_n2, sigma_r2))
            else:
                bound = sigma_r2 / (n * cfg.p_ref)
            ratio = variance / bound if bound > 0 else float("nan")
            records.append(ExperimentRecord(
                experiment_id, cfg.config_hash, cfg.seed, trials,
                {"mode": cfg.mode.value, "n": int(n), "m": cfg.m, "sigma_n2": cfg.sigma_n2,
                 "sigma_r2": sigma_r2, "variance": variance, "bound": bound, "ratio": ratio,
                 "tap_variance_spread": float(np.max(per_tap) / np.min(per_tap)) if np.min(per_tap) > 0 else float("nan")},
                ()))
    return records


def loglog_slope(x, y):
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
