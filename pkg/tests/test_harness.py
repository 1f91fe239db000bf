import math
import subprocess
import sys

import numpy as np
import pytest

from fdcal.errors import StageError, UsageError
from fdcal.harness import cli
from fdcal.harness.experiments import (ExperimentRecord, SyntheticConfig, TrialRunner, loglog_slope,
                                       match_sample_size, run_crlb_validation, run_rate_experiment,
                                       run_ratio_experiment, run_trial_experiment)
from fdcal.harness.pipeline import prepare_trial, run_single_trial, substream, train_and_measure, trial_entropy
from fdcal.harness.records import SCHEMAS, OutputError, csv_text, emit_csv, emit_plot_script, format_value


@pytest.fixture
def small(cfg):
    """Reduced-cost link: shorter channel and measurement block."""
    return cfg.with_(channel_len_m=4, measurement_len=2048)


class TestStreams:
    def test_named_streams_independent(self):
        e = trial_entropy(1, "x", 0)
        a = substream(e, "channel").standard_normal(4)
        b = substream(e, "meas_tx", 0).standard_normal(4)
        c = substream(e, "meas_tx", 1).standard_normal(4)
        assert not np.allclose(a, b) and not np.allclose(b, c)

    def test_stream_reproducible(self):
        e = trial_entropy(5, "x", 3)
        assert np.array_equal(substream(e, "channel").random(3), substream(e, "channel").random(3))

    def test_experiment_id_separates(self):
        assert trial_entropy(1, "a", 0) != trial_entropy(1, "b", 0)


class TestSingleTrial:
    def test_deterministic(self, small):
        a = run_single_trial(small, 600, True)
        b = run_single_trial(small, 600, True)
        assert a == b

    def test_seed_changes_result(self, small):
        assert run_single_trial(small, 600, True, rng_stream=1) != run_single_trial(small, 600, True, rng_stream=2)

    def test_n_must_exceed_m(self, small):
        with pytest.raises(StageError, match="training"):
            run_single_trial(small, small.channel_len_m, False)

    def test_stage_named_on_failure(self, small):
        ctx = prepare_trial(small.with_(mode="wl"), trial_entropy(1, "t", 0))
        with pytest.raises(StageError, match="ls_estimate"):
            train_and_measure(ctx, 10, False)

    def test_calibration_beats_no_calibration_at_same_n(self, small):
        ctx = prepare_trial(small, trial_entropy(1, "cal", 0))
        assert train_and_measure(ctx, 1000, False).sinr_db > train_and_measure(ctx, 1000, True).sinr_db

    def test_ideal_chain_noise_ceiling(self, cfg):
        c = cfg.with_(impairments=False)
        sinr, err = run_single_trial(c, 40_000, False)
        assert sinr == pytest.approx(c.snr_db, abs=0.3)
        assert err < 0.05

    def test_oversampled_path_runs(self, small):
        c = small.with_(estimation_rate="oversampled")
        sinr, _ = run_single_trial(c, 4000, False)
        assert math.isfinite(sinr)


class FakeRunner:
    """Deterministic stand-in: SINR rises with log N and saturates at ``cap``."""

    def __init__(self, cap=math.inf):
        from fdcal.harness.config import TransceiverConfig
        self.cfg = TransceiverConfig()
        self.cap = cap
        self.calls = 0

    def mean_sinr(self, n, with_soi):
        self.calls += 1
        return min(self.cap, 10 * math.log10(n) - (10 if with_soi else 0))


class TestMatchSampleSize:
    def test_finds_crossing(self):
        r = FakeRunner()
        n, _, flags = match_sample_size(r, 30.0, 5000)
        assert flags == ()
        assert n == pytest.approx(10_000, rel=0.01)

    def test_guess_far_off(self):
        n, _, flags = match_sample_size(FakeRunner(), 30.0, 300)
        assert flags == () and n == pytest.approx(10_000, rel=0.01)

    def test_saturation_flagged(self):
        r = FakeRunner(cap=25.0)
        _, _, flags = match_sample_size(r, 30.0, 5000)
        assert flags == ("saturated",)
        assert r.calls < 40

    def test_below_range(self):
        _, _, flags = match_sample_size(FakeRunner(), -50.0, 5000)
        assert flags == ("below_range",)


class TestTrialRunner:
    def test_parallel_matches_serial(self, small):
        a = TrialRunner(small, "par", 3, parallel=1).sinr_samples([(500, True), (800, False)])
        b = TrialRunner(small, "par", 3, parallel=2).sinr_samples([(500, True), (800, False)])
        assert np.array_equal(a, b)

    def test_memoized(self, small):
        r = TrialRunner(small, "memo", 2)
        first = r.mean_sinr(500, True)
        r._ctx = None
        assert r.mean_sinr(500, True) == first

    def test_needs_trials(self, small):
        with pytest.raises(UsageError):
            TrialRunner(small, "x", 0)


class TestExperiments:
    def test_ratio_needs_ten_trials(self, small):
        with pytest.raises(UsageError):
            run_ratio_experiment(small, [500], trials=5)

    def test_ratio_needs_values(self, small):
        with pytest.raises(UsageError):
            run_ratio_experiment(small, [], trials=10)

    def test_degenerate_same_mode_search(self, cfg):
        c = cfg.with_(impairments=False, channel_len_m=4, measurement_len=2048)
        (rec,) = run_ratio_experiment(c, [400], trials=10, search_with_soi=False)
        assert rec["ratio"] == pytest.approx(1.0, abs=0.01)
        assert rec["predicted_ratio"] == 1.0

    def test_rate_sweep_shape(self, small):
        grid = [1e-4, 1e-3, 1e-2, 1e-1]
        recs = run_rate_experiment(small, [1000], grid, trials=2)
        assert [r["t_coh_s"] for r in recs] == grid
        assert len({r["c_nocal"] for r in recs}) == 1
        assert recs[0].flags == ("infeasible",) and math.isnan(recs[0]["c_cal"])
        feasible = [r["c_cal"] for r in recs if not r.flags]
        assert np.all(np.diff(feasible) > 0)

    def test_rate_grid_required(self, small):
        with pytest.raises(UsageError):
            run_rate_experiment(small, [600], [], trials=2)

    def test_trial_experiment(self, small):
        recs = run_trial_experiment(small, 600, trials=2)
        assert [r["with_soi"] for r in recs] == [False, True]

    def test_crlb_zero_noise(self):
        (rec,) = run_crlb_validation(SyntheticConfig(sigma_n2=0.0, sir_factors=(0.0,)), [256], trials=5)
        assert rec["variance"] < 1e-25

    def test_crlb_small(self):
        recs = run_crlb_validation(SyntheticConfig(), [1024], trials=200)
        assert len(recs) == 2
        for r in recs:
            assert r["ratio"] == pytest.approx(1.0, abs=0.15)

    def test_loglog_slope(self):
        x = np.array([1, 10, 100.0])
        assert loglog_slope(x, 3 / x) == pytest.approx(-1.0)


def _ratio_record(**over):
    values = dict(mode="linear", snr_db=14.0308998699, n_c=500, n=13187.25, ratio=26.3745,
                  predicted_ratio=26.298221281347043, sinr_db=13.68)
    values.update(over)
    return ExperimentRecord("ratio", "abc", 1, 50, values, ())


class TestRecords:
    def test_ratio_header(self):
        text = csv_text([_ratio_record()])
        assert text.splitlines()[0] == "experiment,mode,snr_db,n_c,n,ratio,predicted_ratio,sinr_db,trials,seed,flags"

    def test_rates_header(self):
        rec = ExperimentRecord("rates", "abc", 1, 2,
                               dict(n=500, t_coh_s=0.1, c_cal=1.0, c_nocal=0.5, sinr_c_db=3.0, sinr_nc_db=1.0,
                                    snr_db=14.0, f_s=16e6), ("infeasible",))
        lines = csv_text([rec]).splitlines()
        assert lines[0] == "experiment,n,t_coh_s,c_cal,c_nocal,sinr_c_db,sinr_nc_db,snr_db,trials,seed,flags"
        assert lines[1].endswith(",2,1,infeasible")

    def test_twelve_significant_digits(self):
        assert format_value(1 / 3) == "0.333333333333"
        assert format_value(float("nan")) == "nan"
        assert format_value(True) == "1"

    def test_unix_newlines(self, tmp_path):
        p = emit_csv([_ratio_record()], tmp_path / "r.csv")
        raw = p.read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")

    def test_mixed_schemas_rejected(self):
        other = ExperimentRecord("t", "h", 1, 1, dict(mode="linear", n=5, with_soi=True, sinr_db=1.0,
                                                      estimate_error_norm=0.1))
        with pytest.raises(UsageError):
            csv_text([_ratio_record(), other])

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(UsageError):
            emit_csv([], tmp_path / "x.csv")

    def test_io_error_names_path(self, tmp_path):
        bad = tmp_path / "missing" / "x.csv"
        with pytest.raises(OutputError, match="missing"):
            emit_csv([_ratio_record()], bad)

    @pytest.mark.parametrize("kind", sorted(SCHEMAS))
    def test_plot_script_compiles(self, tmp_path, kind):
        values = {c: 1.0 for c in SCHEMAS[kind]}
        values.update(mode="linear", with_soi=False, n=5, n_c=5)
        rec = ExperimentRecord(kind, "h", 1, 1, values)
        p = emit_plot_script([rec], tmp_path / "plot.py")
        compile(p.read_text(), str(p), "exec")
        assert "plot.csv" in p.read_text()

    def test_rates_plot_is_log_x(self, tmp_path):
        rec = ExperimentRecord("rates", "h", 1, 1, dict(n=5, t_coh_s=0.1, c_cal=1.0, c_nocal=1.0, sinr_c_db=1.0,
                                                        sinr_nc_db=1.0, snr_db=1.0))
        assert 'set_xscale("log")' in emit_plot_script([rec], tmp_path / "p.py").read_text()


class TestCli:
    def test_dump_config(self, capsys):
        assert cli.main(["--dump-config"]) == 0
        assert "[system]" in capsys.readouterr().out

    def test_no_command(self):
        assert cli.main([]) == cli.EXIT_CONFIG

    def test_config_error_exit_code(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[bogus]\nx = 1\n")
        assert cli.main(["trial", "--config", str(p)]) == 1

    def test_runtime_error_exit_code(self):
        assert cli.main(["trial", "--n", "10", "--mode", "wl"]) == 2

    def test_infeasible_exit_code(self, tmp_path):
        p = tmp_path / "small.ini"
        p.write_text("[channel]\nchannel_len_m = 4\n[simulation]\nmeasurement_len = 2048\n")
        rc = cli.main(["rates", "--config", str(p), "--n", "5000", "--trials", "1",
                       "--tcoh-min", "1e-4", "--tcoh-max", "1e-4", "--tcoh-points", "1"])
        assert rc == 3

    def test_crlb_writes_csv_and_plot(self, tmp_path):
        out = tmp_path / "crlb.csv"
        assert cli.main(["crlb", "--n", "256,512", "--trials", "20", "--out", str(out)]) == 0
        assert out.read_text().startswith("experiment,mode,n,m,sigma_n2,sigma_r2,variance,bound,ratio,")
        assert (tmp_path / "crlb.py").exists()

    def test_seed_replay_byte_identical(self, tmp_path):
        p = tmp_path / "small.ini"
        p.write_text("[channel]\nchannel_len_m = 4\n[simulation]\nmeasurement_len = 2048\n")
        outs = []
        for k in range(2):
            out = tmp_path / f"t{k}.csv"
            assert cli.main(["trial", "--config", str(p), "--seed", "9", "--n", "600", "--trials", "2",
                             "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_console_script(self):
        r = subprocess.run([sys.executable, "-m", "fdcal.harness.cli", "--help"], capture_output=True, text=True)
        assert r.returncode == 0
        for sub in ("ratio", "rates", "crlb", "trial"):
            assert sub in r.stdout
