import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from serdes_link import afe
from serdes_link.core import LinkConfig, Waveform, rng_for


def closed_form_step(t, tau):
    return 1.0 - math.exp(-t / tau)


def loop_lowpass(x, dt, tau, y0):
    # plain recursion, independent of the lfilter path
    a = 1.0 - math.exp(-dt / tau)
    y, out = y0, []
    for v in x:
        y = y + a * (v - y)
        out.append(y)
    return np.array(out)


@pytest.mark.parametrize("spu", [20, 60, 100])
def test_step_at_tau(spu):
    dt, tau = 1.0 / spu, 0.4
    y = afe.lowpass(np.ones(4 * spu), dt, tau, initial=0.0)
    k = round(tau / dt)
    assert y[k - 1] == pytest.approx(1 - math.exp(-1), rel=2 / spu)


def test_driver_step_one_ui():
    cfg = LinkConfig(driver_tau=100e-12)
    w = afe.drive([1, 1], cfg)
    n = cfg.samples_per_ui
    assert w.samples[n - 1] / cfg.vdd == pytest.approx(closed_form_step(cfg.ui, 100e-12), rel=1e-9)
    assert w.samples[n - 1] / cfg.vdd == pytest.approx(0.9933, abs=1e-4)


def test_matches_recursion():
    x = np.random.default_rng(0).normal(size=500)
    assert np.allclose(afe.lowpass(x, 1e-12, 7e-12, 0.3), loop_lowpass(x, 1e-12, 7e-12, 0.3))


def test_streaming_equals_whole():
    x = np.random.default_rng(1).normal(size=1000)
    f = afe.FirstOrderFilter("lowpass", 5.0, 1.0, state=0.0)
    parts = np.concatenate([f.process(x[:333]), f.process(x[333:])])
    assert np.allclose(parts, afe.lowpass(x, 1.0, 5.0, 0.0))


def test_dc_settles_to_vdd(cfg):
    w = afe.drive(np.ones(50, np.uint8), cfg)
    assert w.samples[-1] == pytest.approx(cfg.vdd, rel=1e-9)


def test_alternating_driver_swing_settles(cfg):
    # with 2 pF load the 1010 pattern still reaches near-rail levels each UI
    w = afe.drive(np.tile([1, 0], 50), cfg)
    tail = w.samples[-20 * cfg.samples_per_ui:]
    assert tail.max() > 0.99 * cfg.vdd and tail.min() < 0.01 * cfg.vdd


def test_channel_identity():
    cfg = LinkConfig(channel_loss_db=0.0, channel_bw=math.inf)
    x = Waveform(np.random.default_rng(2).normal(size=300), cfg.dt)
    assert np.array_equal(afe.channel(x, cfg).samples, x.samples)


def test_34db_settled_level():
    cfg = LinkConfig()
    y = afe.channel(Waveform(np.full(5000, 1.8), cfg.dt), cfg, initial=0.0).samples
    assert y[-1] == pytest.approx(0.03591, rel=1e-3)
    assert y[-1] == pytest.approx(1.8 * 10 ** (-1.7), rel=1e-12)


def test_20db_is_tenth():
    cfg = LinkConfig(channel_loss_db=20.0)
    y = afe.channel(Waveform(np.full(5000, 0.7), cfg.dt), cfg).samples
    assert y[-1] == pytest.approx(0.07, rel=1e-12)


def test_ac_coupling_constant_goes_to_bias(cfg):
    c = cfg.with_overrides({"ac_coupling_tau": 100 * cfg.dt})
    y = afe.ac_couple_and_bias(Waveform(np.full(20000, 0.3), c.dt), c, dc_level=0.0).samples
    assert y[-1] == pytest.approx(c.vdd / 2, abs=1e-6)


def test_ac_coupling_at_bias_is_identity(cfg):
    y = afe.ac_couple_and_bias(Waveform(np.full(100, cfg.vdd / 2), cfg.dt), cfg,
                               dc_level=cfg.vdd / 2).samples
    assert np.allclose(y, cfg.vdd / 2)


def test_ac_coupling_square_wave_droop():
    cfg = LinkConfig(ac_coupling_tau=1e4 * 500e-12)
    a = 0.02
    x = np.repeat(np.tile([a, -a], 200), cfg.samples_per_ui)
    y = afe.ac_couple_and_bias(Waveform(x, cfg.dt), cfg, dc_level=0.0).samples - cfg.vdd / 2
    n = cfg.samples_per_ui
    droop = 1 - y[n - 1] / y[0]
    assert 0 < droop <= 1 - math.exp(-1 / 1e4) + 1e-9
    assert np.max(np.abs(np.abs(y) - a)) < 0.01 * a


def test_impulse_response_sum():
    x = np.zeros(20000)
    x[0] = 1.0
    assert afe.lowpass(x, 1.0, 50.0, 0.0).sum() == pytest.approx(1.0, rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.floats(0.0, 45.0))
def test_stage_shapes_preserved(n_bits, loss):
    cfg = LinkConfig(channel_loss_db=loss)
    bits = np.random.default_rng(n_bits).integers(0, 2, n_bits)
    w = afe.drive(bits, cfg)
    ch = afe.channel(w, cfg)
    rx = afe.ac_couple_and_bias(ch, cfg)
    assert len(w) == len(ch) == len(rx) == n_bits * cfg.samples_per_ui
    assert w.dt == ch.dt == rx.dt
    assert np.all(np.isfinite(rx.samples))


def test_resolve_outside_deadzone(cfg):
    v = np.array([cfg.vdd / 2 + 0.05, cfg.vdd / 2 - 0.05])
    assert list(afe.resolve_samples(v, cfg, rng_for(0, 1))) == [1, 0]


def test_resolve_inside_deadzone_is_coin(cfg):
    v = np.full(20000, cfg.vdd / 2 + 0.015)
    bits = afe.resolve_samples(v, cfg, rng_for(0, 1))
    assert 0.45 < bits.mean() < 0.55


def test_resolve_with_noise_follows_noise_sign(cfg):
    c = cfg.with_overrides({"noise_sigma": 1e-3})
    v = np.full(20000, c.vdd / 2)
    bits = afe.resolve_samples(v, c, rng_for(0, 1))
    noise = rng_for(0, 1).normal(0.0, 1e-3, v.size)
    assert np.array_equal(bits, (noise > 0).astype(np.uint8))


def test_square_waves_at_deadzone_edge(cfg):
    n = cfg.samples_per_ui
    rng = rng_for(0, 1)
    # exactly 32 mV sits on the edge where float rounding decides; probe just inside
    for pp, deterministic in [(0.0318, False), (0.0359, True)]:
        x = cfg.vdd / 2 + np.repeat(np.tile([pp / 2, -pp / 2], 500), n)
        bits = afe.resolve_samples(x, cfg, rng)
        expected = np.repeat(np.tile([1, 0], 500), n)
        assert np.array_equal(bits, expected) is deterministic
