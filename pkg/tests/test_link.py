import math

import numpy as np
import pytest

from serdes_link import link
from serdes_link.core import LinkConfig, ParallelFrame, Waveform
from serdes_link.link import BracketError, Impairments, run_link

N = 100_000


def test_defaults_error_free(cfg):
    r = run_link(cfg, N)
    assert r.locked and r.error_count == 0 and r.bit_count > 0.99 * N


def test_lossless_error_free(cfg):
    r = run_link(cfg.with_overrides({"channel_loss_db": 0.0}), N)
    assert r.passed and r.lock_ui <= 192


def test_40db_flagged(cfg):
    r = run_link(cfg.with_overrides({"channel_loss_db": 40.0}), 20_000)
    assert not r.passed and not r.locked
    assert 0.25 <= r.ber <= 0.6


def test_too_few_bits(cfg):
    with pytest.raises(ValueError):
        run_link(cfg, 10)


def test_report_csv(tmp_path, cfg):
    r = run_link(cfg, 5000)
    r.to_csv(tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    keys = [line.split(",")[0] for line in rows]
    assert keys[0] == "key" and {"ber", "error_count", "lock_ui", "aligned_lag"} <= set(keys)


def test_analytic_edge(cfg):
    assert link.analytic_loss_edge(cfg) == pytest.approx(20 * math.log10(1.8 / 0.032))
    assert link.analytic_loss_edge(cfg) == pytest.approx(35.0, abs=0.01)


def test_max_loss_defaults(cfg):
    got = link.max_loss_search(cfg, N, 20.0, 45.0, 0.25)
    assert 34.5 <= got <= 35.25
    assert got < link.analytic_loss_edge(cfg)


def test_max_loss_deadzone_doubled(cfg):
    base = link.max_loss_search(cfg, 20_000, 20.0, 45.0)
    doubled = link.max_loss_search(cfg.with_overrides({"rx_deadzone": 0.032}), 20_000, 20.0, 45.0)
    assert base - doubled == pytest.approx(20 * math.log10(2), abs=0.5)


def test_max_loss_no_deadzone_bracket(cfg):
    with pytest.raises(BracketError):
        link.max_loss_search(cfg.with_overrides({"rx_deadzone": 0.0}), 5000, 20.0, 45.0)
    with pytest.raises(BracketError):
        link.max_loss_search(cfg, 5000, 40.0, 30.0)


def test_sensitivity_fixed_bandwidth_grows_with_rate():
    cfg = LinkConfig(channel_bw=1.5e9)
    rows = link.sensitivity_sweep(cfg, [3e9, 1e9, 2e9], 20_000)
    assert [r.bitrate for r in rows] == [1e9, 2e9, 3e9]
    launch = [r.launch_swing_v for r in rows]
    assert launch[0] < launch[1] < launch[2]
    assert rows[0].max_loss_db > rows[2].max_loss_db


def test_sensitivity_sweep_empty(cfg):
    with pytest.raises(ValueError):
        link.sensitivity_sweep(cfg, [])


def test_sweep_order_independent_of_jobs(cfg):
    a = link.loss_sweep(cfg, [36.0, 20.0, 30.0], 5000, jobs=1)
    b = link.loss_sweep(cfg, [30.0, 36.0, 20.0], 5000, jobs=3)
    assert a == b and [r.loss_db for r in a] == [20.0, 30.0, 36.0]


def test_ber_monotone_in_loss(cfg):
    rows = link.loss_sweep(cfg, [30.0, 34.0, 35.5, 37.0, 40.0], 20_000)
    bers = [r.ber for r in rows]
    assert bers == sorted(bers)


def test_ber_monotone_in_noise(cfg):
    c = cfg.with_overrides({"channel_loss_db": 30.0})
    bers = [run_link(c.with_overrides({"noise_sigma": s}), 20_000).ber
            for s in (0.0, 2e-3, 5e-3, 2e-2)]
    assert bers == sorted(bers) and bers[0] == 0 and bers[-1] > 0


def test_static_offset_locks_at_eye_centre(cfg):
    c = cfg.with_overrides({"channel_loss_db": 0.0})
    r = run_link(c, 20_000, Impairments(static_offset_ui=0.4))
    assert r.passed and r.lock_ui <= 64 * 3
    # data delayed 24 samples: eye centre at 30 + 24 - 60 = -6, i.e. 54 -> phase 4
    assert r.cdr_phase_trace[-1] == 4


def test_glitch_filter_in_link(cfg):
    c = cfg.with_overrides({"channel_loss_db": 0.0})
    imp = Impairments(glitch_rate=1e-3)
    assert run_link(c, 20_000, imp).error_count == 0
    assert run_link(c.with_overrides({"cdr.glitch_filter_len": 0}), 20_000, imp).error_count > 0


def test_frames_end_to_end(cfg):
    rng = np.random.default_rng(11)
    frames = [ParallelFrame(tuple(int(x) for x in rng.integers(0, 2**32, 8, dtype=np.uint64)))
              for _ in range(40)]
    got, report = link.run_frames(cfg, frames)
    assert got == frames and report.error_count == 0


def test_eye_constant():
    cfg = LinkConfig()
    eye = link.eye_diagram(Waveform(np.full(60 * 120, 0.9), cfg.dt), cfg, 16)
    assert eye.total == 60 * 120
    assert np.count_nonzero(eye.counts.sum(axis=0)) == 1


def test_eye_alternating_opening():
    cfg = LinkConfig(channel_loss_db=0.0)
    st = link.stage_waveforms(cfg, np.tile([1, 0], 100))
    eye = link.eye_diagram(st.tx, cfg, 32)
    assert eye.total == len(st.tx)
    opening = link.eye_opening(st.tx, cfg, threshold=cfg.vdd / 2)
    assert opening[30] == pytest.approx(cfg.vdd, rel=0.01)
    assert opening.max() == opening[opening.argmax()] and opening[0] < opening[30]


def test_eye_needs_100_ui(cfg):
    with pytest.raises(ValueError):
        link.eye_diagram(Waveform(np.zeros(60 * 99), cfg.dt), cfg)


def test_eye_csv(tmp_path, cfg):
    st = link.stage_waveforms(cfg, np.tile([1, 1, 0], 60))
    link.eye_diagram(st.rx_input, cfg).to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "phase_bin,volt_bin,count"
    assert sum(int(x.split(",")[2]) for x in lines[1:]) == 180 * 60


def test_stage_waveforms_match_block_pipeline(cfg):
    bits = np.random.default_rng(0).integers(0, 2, 3000).astype(np.uint8)
    st = link.stage_waveforms(cfg, bits)
    probe = link.EyeProbe(cfg)
    link.simulate_groups(cfg, bits, probe=probe)
    ref = link.EyeProbe(cfg)
    ref.feed(st.rx_input.samples, 0)
    assert np.allclose(probe.upper, ref.upper) and np.allclose(probe.lower, ref.lower)
