import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdcal.cancellation import (ChannelEstimate, Mode, build_reference_matrix, digital_cancel, ls_estimate,
                                measure_sinr)
from fdcal.errors import EstimationError, UsageError
from fdcal.rf_chain import IqImbalanceParams
from fdcal.harness.pipeline import prepare_trial, simulate_block, train_and_measure, trial_entropy

from conftest import cb, cgauss


class TestMode:
    @pytest.mark.parametrize("text,mode", [("linear", Mode.LINEAR), ("WL", Mode.WIDELY_LINEAR),
                                           ("widely_linear", Mode.WIDELY_LINEAR), (Mode.LINEAR, Mode.LINEAR)])
    def test_parse(self, text, mode):
        assert Mode.parse(text) is mode

    def test_parse_unknown(self):
        with pytest.raises(UsageError):
            Mode.parse("nonlinear")


class TestBuildReferenceMatrix:
    def test_small_read_off(self):
        X = build_reference_matrix([cb([1, 1j, -1])], 3, 2)
        assert np.array_equal(X.data, np.array([[1j, 1], [-1, 1j]]))

    def test_shapes(self, rng):
        refs = [cb(cgauss(rng, 100)) for _ in range(2)]
        lin = build_reference_matrix(refs, 100, 8, "linear")
        wl = build_reference_matrix(refs, 100, 8, "wl")
        assert lin.data.shape == (93, 16)
        assert wl.data.shape == (93, 32)

    def test_wl_single_tx_doubles_columns(self, rng):
        X = build_reference_matrix([cb(cgauss(rng, 50))], 50, 5, Mode.WIDELY_LINEAR)
        assert X.cols == 10
        assert np.array_equal(X.data[:, 5:], np.conj(X.data[:, :5]))

    def test_layout_matches_definition(self, rng):
        x = cgauss(rng, 40)
        n, m = 30, 6
        X = build_reference_matrix([cb(x)], n, m)
        for r in range(n - m + 1):
            for k in range(m):
                assert X.data[r, k] == x[m - 1 + r - k]

    def test_white_reference_near_orthogonal(self, rng):
        n, m = 4096, 8
        X = build_reference_matrix([cb(cgauss(rng, n))], n, m)
        G = X.data.conj().T @ X.data / (n * X.p_ref)
        assert np.max(np.abs(G - np.diag(np.diag(G)))) < 0.05

    def test_insufficient_samples(self, rng):
        with pytest.raises(UsageError):
            build_reference_matrix([cb(cgauss(rng, 10))], 20, 4)

    def test_m_not_below_n(self, rng):
        with pytest.raises(UsageError):
            build_reference_matrix([cb(cgauss(rng, 10))], 10, 10)

    def test_window(self, rng):
        X = build_reference_matrix([cb(cgauss(rng, 20))], 20, 4)
        y = np.arange(20)
        assert np.array_equal(X.window(y), y[3:])
        assert np.array_equal(X.window(y[3:]), y[3:])
        with pytest.raises(UsageError):
            X.window(y[:5])


class TestLsEstimate:
    @pytest.mark.parametrize("mode", ["linear", "wl"])
    def test_noiseless_recovery(self, rng, mode):
        refs = [cb(cgauss(rng, 500)) for _ in range(2)]
        X = build_reference_matrix(refs, 500, 16, mode)
        h = cgauss(rng, X.cols)
        est = ls_estimate(X, X.data @ h)
        assert np.linalg.norm(est.taps - h) / np.linalg.norm(h) < 1e-10

    def test_accepts_full_length_vector(self, rng):
        x = cgauss(rng, 200)
        X = build_reference_matrix([cb(x)], 200, 4)
        h = cgauss(rng, 4)
        y = np.convolve(x, h)[:200]
        assert np.allclose(ls_estimate(X, cb(y)).taps, h)

    def test_joint_outputs(self, rng):
        X = build_reference_matrix([cb(cgauss(rng, 300))], 300, 4)
        H = cgauss(rng, 8).reshape(4, 2)
        est = ls_estimate(X, X.data @ H)
        assert np.allclose(est.taps, H)
        assert np.allclose(est.output(1).taps, H[:, 1])

    def test_rank_deficient_names_block(self, rng):
        x = cgauss(rng, 200)
        X = build_reference_matrix([cb(x), cb(x)], 200, 4)
        with pytest.raises(EstimationError, match="rank deficient"):
            ls_estimate(X, cgauss(rng, X.rows))

    def test_real_reference_wl_is_rank_deficient(self, rng):
        X = build_reference_matrix([cb(rng.standard_normal(200))], 200, 4, "wl")
        with pytest.raises(EstimationError, match="tx0"):
            ls_estimate(X, cgauss(rng, X.rows))

    def test_underdetermined(self, rng):
        X = build_reference_matrix([cb(cgauss(rng, 20))] * 2, 20, 8, "wl")
        with pytest.raises(EstimationError):
            ls_estimate(X, cgauss(rng, X.rows))

    @pytest.mark.parametrize("sigma_r2", [0.0, 10.0])
    def test_per_tap_variance(self, sigma_r2):
        n, m, trials = 1024, 4, 1000
        r = np.random.default_rng(99)
        errs = []
        for _ in range(trials):
            X = build_reference_matrix([cb(cgauss(r, n))], n, m)
            h = cgauss(r, m)
            y = X.data @ h + cgauss(r, X.rows, 1.0) + cgauss(r, X.rows, sigma_r2)
            errs.append(ls_estimate(X, y).taps - h)
        var = np.mean(np.abs(np.asarray(errs)) ** 2)
        assert var == pytest.approx((1.0 + sigma_r2) / n, rel=0.05)

    def test_wl_image_block_small_without_iq_imbalance(self, cfg):
        c = cfg.with_(mode="wl", tx_iq=IqImbalanceParams(math.inf))
        ctx = prepare_trial(c, trial_entropy(3, "image", 0))
        blk = simulate_block(ctx.cfg, ctx.channel, 4000, False, ctx.entropy, "train")
        X = build_reference_matrix(blk.refs, 4000, c.channel_len_m, "wl")
        est = ls_estimate(X, np.stack([X.window(s) for s in blk.y], axis=1))
        for i in range(c.n_rx):
            e = est.output(i)
            assert np.sum(np.abs(e.image()) ** 2) <= 0.01 * np.sum(np.abs(e.direct()) ** 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), m=st.integers(1, 12), n_tx=st.integers(1, 2),
       wl=st.booleans())
def test_ls_orthogonality(seed, m, n_tx, wl):
    r = np.random.default_rng(seed)
    n = 400
    X = build_reference_matrix([cb(cgauss(r, n)) for _ in range(n_tx)], n, m, "wl" if wl else "linear")
    y = cgauss(r, X.rows)
    est = ls_estimate(X, y)
    resid = y - X.data @ est.taps
    assert np.linalg.norm(X.data.conj().T @ resid) / np.linalg.norm(X.data.conj().T @ y) < 1e-8


class TestDigitalCancel:
    def _setup(self, rng):
        X = build_reference_matrix([cb(cgauss(rng, 300))], 300, 4)
        h = cgauss(rng, 4)
        soi = cgauss(rng, X.rows, 0.1)
        noise = cgauss(rng, X.rows, 0.01)
        return X, h, soi, noise

    def test_perfect_estimate(self, rng):
        X, h, soi, noise = self._setup(rng)
        y = X.data @ h + soi + noise
        res = digital_cancel(cb(y), X, ChannelEstimate(h, Mode.LINEAR, 0.0, 4, 1))
        assert np.allclose(res.samples, soi + noise, atol=1e-12)

    def test_zero_estimate(self, rng):
        X, h, soi, noise = self._setup(rng)
        y = X.data @ h + soi
        res = digital_cancel(cb(y), X, ChannelEstimate(np.zeros(4), Mode.LINEAR, 0.0, 4, 1))
        assert np.array_equal(res.samples, y)

    def test_layout_mismatch(self, rng):
        X, h, soi, _ = self._setup(rng)
        with pytest.raises(UsageError):
            digital_cancel(cb(soi), X, ChannelEstimate(np.zeros(8), Mode.WIDELY_LINEAR, 0.0, 4, 1))

    def test_joint_estimate_rejected(self, rng):
        X, h, soi, _ = self._setup(rng)
        with pytest.raises(UsageError):
            digital_cancel(cb(soi), X, ChannelEstimate(np.zeros((4, 2)), Mode.LINEAR, 0.0, 4, 1))


class TestMeasureSinr:
    def test_soi_plus_noise_at_14_db(self, rng):
        soi = cgauss(rng, 200_000, 10 ** 1.4)
        noise = cgauss(rng, 200_000, 1.0)
        assert measure_sinr(cb(soi + noise), cb(soi)) == pytest.approx(14.0, abs=0.3)

    def test_exact_soi(self, rng):
        soi = cb(cgauss(rng, 100))
        assert measure_sinr(soi, soi) == float("inf")

    def test_halving_soi(self, rng):
        soi, noise = cgauss(rng, 1000), cgauss(rng, 1000)
        a = measure_sinr(cb(soi + noise), cb(soi))
        b = measure_sinr(cb(soi / np.sqrt(2) + noise), cb(soi / np.sqrt(2)))
        assert a - b == pytest.approx(3.0103, abs=1e-3)

    def test_length_mismatch(self, rng):
        with pytest.raises(UsageError):
            measure_sinr(cb(np.ones(3)), cb(np.ones(4)))


class TestEndToEnd:
    def test_large_n_approaches_noise_ceiling(self, cfg):
        ctx = prepare_trial(cfg, trial_entropy(5, "e2e", 0))
        r = train_and_measure(ctx, 20_000, with_soi=False)
        assert r.sinr_db > cfg.snr_db - 0.5

    def test_wl_beats_linear_with_tx_iq_imbalance(self, cfg):
        # both canceller models regress on the original digital samples
        c = cfg.with_(mode="wl").effective()
        sinr = {"linear": [], "wl": []}
        for t in range(3):
            ctx = prepare_trial(c, trial_entropy(9, "wl-vs-lin", t))
            train = simulate_block(c, ctx.channel, 5000, False, ctx.entropy, "train")
            meas = simulate_block(c, ctx.channel, 8192, True, ctx.entropy, "meas")
            for mode in sinr:
                Xt = build_reference_matrix(train.refs, 5000, c.channel_len_m, mode)
                est = ls_estimate(Xt, train.y[0])
                Xm = build_reference_matrix(meas.refs, 8192, c.channel_len_m, mode)
                res = digital_cancel(meas.y[0], Xm, est)
                sinr[mode].append(measure_sinr(res, cb(Xm.window(meas.soi[0]))))
        assert np.mean(sinr["wl"]) > np.mean(sinr["linear"]) + 3.0
