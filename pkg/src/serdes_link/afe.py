"""Behavioral analog front end: driver, channel, AC coupling, RX resolve.

Every stage maps a Waveform to a Waveform (or per-sample logic) on the same
grid. First-order sections use the exact step-invariant update
``y[n] = y[n-1] + a * (x[n] - y[n-1])`` with ``a = 1 - exp(-dt/tau)``; the
highpass is its complement ``x - lowpass(x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .core import LinkConfig, Waveform, as_bits


@dataclass
class FirstOrderFilter:
    """Streaming first-order lowpass/highpass section.

    ``state`` is the previous lowpass output; ``None`` means start settled at
    the first input sample (or at ``initial`` if given to ``process``).
    A ``tau`` of zero makes the lowpass an exact passthrough.
    """

    kind: str
    tau: float
    dt: float
    state: float | None = None

    def __post_init__(self):
        if self.kind not in ("lowpass", "highpass"):
            raise ValueError(f"kind must be lowpass or highpass, got {self.kind!r}")
        if self.tau < 0 or self.dt <= 0:
            raise ValueError("need tau >= 0 and dt > 0")
        if self.kind == "highpass" and self.tau == 0:
            raise ValueError("highpass needs tau > 0")

    @property
    def alpha(self) -> float:
        if self.tau == 0:
            return 1.0
        return -math.expm1(-self.dt / self.tau)

    def process(self, x: np.ndarray, initial: float | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return x.copy()
        if self.state is None:
            self.state = float(x[0]) if initial is None else float(initial)
        a = self.alpha
        if a == 1.0:
            low = x.copy()
        else:
            low, _ = lfilter([a], [1.0, a - 1.0], x, zi=[(1.0 - a) * self.state])
        self.state = float(low[-1])
        if self.kind == "lowpass":
            return low
        return x - low


def lowpass(x, dt: float, tau: float, initial: float | None = None) -> np.ndarray:
    return FirstOrderFilter("lowpass", tau, dt).process(x, initial)


def highpass(x, dt: float, tau: float, initial: float | None = None) -> np.ndarray:
    """``initial`` is the DC level the section is assumed settled at."""
    return FirstOrderFilter("highpass", tau, dt).process(x, initial)


def nrz(bits, cfg: LinkConfig, high: float | None = None) -> np.ndarray:
    high = cfg.vdd if high is None else high
    return np.repeat(as_bits(bits) * high, cfg.samples_per_ui)


def drive(bits, cfg: LinkConfig, initial: float | None = 0.0) -> Waveform:
    """Rail-to-rail NRZ through the driver's output RC.

    The driver starts at ``initial`` volts (ground by default).
    """
    x = nrz(bits, cfg)
    y = lowpass(x, cfg.dt, cfg.driver_tau_value, initial=initial)
    return Waveform(y, cfg.dt)


def channel_tau(cfg: LinkConfig) -> float:
    bw = cfg.channel_bw_value
    if math.isinf(bw):
        return 0.0
    return 1.0 / (2 * math.pi * bw)


def channel(w: Waveform, cfg: LinkConfig, initial: float | None = None) -> Waveform:
    """Flat insertion loss followed by a single-pole bandwidth limit."""
    x = w.samples if cfg.channel_loss_db == 0 else w.samples * cfg.loss_factor
    return w.with_samples(lowpass(x, w.dt, channel_tau(cfg), initial=initial))


def ac_couple_and_bias(w: Waveform, cfg: LinkConfig, dc_level: float | None = None) -> Waveform:
    """Block DC and recenter on the inverter self-bias point ``vdd / 2``.

    The coupling capacitor is taken as precharged to ``dc_level``, the mean
    of the input when not given.
    """
    if dc_level is None:
        dc_level = float(np.mean(w.samples))
    y = highpass(w.samples, w.dt, cfg.ac_coupling_tau_value, initial=dc_level)
    return w.with_samples(y + cfg.vdd / 2)


def rx_resolve(w: Waveform, cfg: LinkConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-sample logic level out of the feedback-inverter receiver.

    Deviations within ``rx_deadzone`` of the bias do not resolve: the bit
    follows the sign of the input-referred noise, or a fair coin when there
    is no noise. Outside the dead zone the amplified, rail-clamped signal
    (noise included) is compared against the bias.
    """
    return resolve_samples(w.samples, cfg, rng)


def resolve_samples(v: np.ndarray, cfg: LinkConfig, rng: np.random.Generator) -> np.ndarray:
    mid = cfg.vdd / 2
    dev = np.asarray(v, dtype=float) - mid
    if cfg.noise_sigma > 0:
        noise = rng.normal(0.0, cfg.noise_sigma, dev.size)
        undecided = noise > 0
    else:
        noise = 0.0
        undecided = rng.random(dev.size, dtype=np.float32) < 0.5
    amplified = np.clip(mid + cfg.rx_gain * (dev + noise), 0.0, cfg.vdd)
    # two inverting stages: polarity is preserved
    logic = amplified > mid
    dead = np.abs(dev) <= cfg.rx_deadzone
    return np.where(dead, undecided, logic).astype(np.uint8)
