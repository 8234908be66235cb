"""Shared types, the sampled-time model and configuration handling."""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

STREAM_COUNT = 8
WORD_BITS = 32
# default coupling time constant in UI; long enough that PRBS-31 wander stays small
AC_COUPLING_UI = 1e5


class ConfigError(ValueError):
    """Raised with every violated constraint, not just the first."""

    def __init__(self, violations: list[tuple[str, Any, str]]):
        self.violations = violations
        msg = "; ".join(f"{name}={value!r}: {why}" for name, value, why in violations)
        super().__init__(msg)


def as_bits(bits) -> np.ndarray:
    """Coerce to a uint8 bit array, rejecting anything but 0/1."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("bitstream may only contain 0 and 1")
    return arr.astype(np.uint8, copy=False)


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled voltage trace."""

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    def with_samples(self, samples: np.ndarray) -> Waveform:
        return Waveform(samples, self.dt, self.t0)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("time_s,volts\n")
            for t, v in zip(self.times, self.samples):
                fh.write(f"{t:.6e},{v:.9e}\n")


@dataclass(frozen=True)
class ParallelFrame:
    """Eight 32-bit words as presented to the serializer."""

    streams: tuple[int, ...]
    word_bits: int = WORD_BITS

    def __post_init__(self):
        streams = tuple(int(w) for w in self.streams)
        object.__setattr__(self, "streams", streams)
        if len(streams) != STREAM_COUNT:
            raise ValueError(f"expected {STREAM_COUNT} streams, got {len(streams)}")
        limit = 1 << self.word_bits
        for i, w in enumerate(streams):
            if not 0 <= w < limit:
                raise ValueError(f"stream {i} value {w:#x} does not fit in {self.word_bits} bits")

    @classmethod
    def zeros(cls) -> ParallelFrame:
        return cls((0,) * STREAM_COUNT)


@dataclass(frozen=True)
class CdrConfig:
    phases: int = 5
    window_ui: int = 64
    fifo_depth: int = 16
    # scan bits
    glitch_filter_len: int = 1
    jitter_hysteresis: int = 2


@dataclass(frozen=True)
class LinkConfig:
    """Everything that parameterizes one link simulation.

    ``driver_tau``, ``channel_bw`` and ``ac_coupling_tau`` may be left as
    ``None`` and are then derived (see the ``*_value`` properties).
    """

    bitrate: float = 2e9
    vdd: float = 1.8
    samples_per_ui: int = 60
    driver_r_out: float = 12.5
    driver_c_load: float = 2e-12
    driver_tau: float | None = None
    channel_loss_db: float = 34.0
    channel_bw: float | None = None
    channel_bw_ratio: float = 3.0
    ac_coupling_tau: float | None = None
    rx_gain: float = 100.0
    rx_deadzone: float = 0.016
    noise_sigma: float = 0.0
    prbs_order: int = 31
    prbs_seed: int | None = None
    cdr: CdrConfig = field(default_factory=CdrConfig)
    rng_seed: int = 1

    @property
    def ui(self) -> float:
        return 1.0 / self.bitrate

    @property
    def dt(self) -> float:
        return self.ui / self.samples_per_ui

    @property
    def driver_tau_value(self) -> float:
        if self.driver_tau is not None:
            return self.driver_tau
        return self.driver_r_out * self.driver_c_load

    @property
    def channel_bw_value(self) -> float:
        if self.channel_bw is not None:
            return self.channel_bw
        return self.channel_bw_ratio * self.bitrate

    @property
    def ac_coupling_tau_value(self) -> float:
        if self.ac_coupling_tau is not None:
            return self.ac_coupling_tau
        return AC_COUPLING_UI * self.ui

    @property
    def loss_factor(self) -> float:
        return 10.0 ** (-self.channel_loss_db / 20.0)

    def with_overrides(self, overrides: Mapping[str, Any]) -> LinkConfig:
        return apply_overrides(self, overrides)


def _check(violations, name, value, ok, why):
    if not ok:
        violations.append((name, value, why))


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate_config(cfg: LinkConfig) -> LinkConfig:
    """Return ``cfg`` unchanged if it is consistent, else raise ConfigError."""
    v: list[tuple[str, Any, str]] = []
    _check(v, "bitrate", cfg.bitrate, _finite(cfg.bitrate) and cfg.bitrate > 0, "must be > 0")
    _check(v, "vdd", cfg.vdd, _finite(cfg.vdd) and cfg.vdd > 0, "must be > 0")
    spu_ok = isinstance(cfg.samples_per_ui, int) and cfg.samples_per_ui >= 8
    _check(v, "samples_per_ui", cfg.samples_per_ui, spu_ok, "must be an integer >= 8")
    _check(v, "driver_r_out", cfg.driver_r_out, _finite(cfg.driver_r_out) and cfg.driver_r_out > 0,
           "must be > 0")
    _check(v, "driver_c_load", cfg.driver_c_load,
           _finite(cfg.driver_c_load) and cfg.driver_c_load > 0, "must be > 0")
    if cfg.driver_tau is not None:
        _check(v, "driver_tau", cfg.driver_tau, _finite(cfg.driver_tau) and cfg.driver_tau >= 0,
               "must be >= 0")
    _check(v, "channel_loss_db", cfg.channel_loss_db,
           _finite(cfg.channel_loss_db) and cfg.channel_loss_db >= 0, "must be >= 0")
    if cfg.channel_bw is not None:
        _check(v, "channel_bw", cfg.channel_bw,
               isinstance(cfg.channel_bw, (int, float)) and cfg.channel_bw > 0, "must be > 0")
    _check(v, "channel_bw_ratio", cfg.channel_bw_ratio,
           isinstance(cfg.channel_bw_ratio, (int, float)) and cfg.channel_bw_ratio > 0,
           "must be > 0")
    if cfg.ac_coupling_tau is not None:
        _check(v, "ac_coupling_tau", cfg.ac_coupling_tau,
               _finite(cfg.ac_coupling_tau) and cfg.ac_coupling_tau > 0, "must be > 0")
    _check(v, "rx_gain", cfg.rx_gain, _finite(cfg.rx_gain) and cfg.rx_gain > 0, "must be > 0")
    _check(v, "rx_deadzone", cfg.rx_deadzone, _finite(cfg.rx_deadzone) and cfg.rx_deadzone >= 0,
           "must be >= 0")
    _check(v, "noise_sigma", cfg.noise_sigma, _finite(cfg.noise_sigma) and cfg.noise_sigma >= 0,
           "must be >= 0")
    _check(v, "prbs_order", cfg.prbs_order, cfg.prbs_order in (7, 15, 31), "must be 7, 15 or 31")
    if cfg.prbs_seed is not None and cfg.prbs_order in (7, 15, 31):
        _check(v, "prbs_seed", cfg.prbs_seed,
               isinstance(cfg.prbs_seed, int) and 0 < cfg.prbs_seed < (1 << cfg.prbs_order),
               f"must be a nonzero {cfg.prbs_order}-bit state")
    _check(v, "rng_seed", cfg.rng_seed, isinstance(cfg.rng_seed, int) and cfg.rng_seed >= 0,
           "must be a non-negative integer")

    c = cfg.cdr
    phases_ok = isinstance(c.phases, int) and c.phases >= 3 and c.phases % 2 == 1
    _check(v, "cdr.phases", c.phases, phases_ok, "must be odd and >= 3")
    _check(v, "cdr.window_ui", c.window_ui, isinstance(c.window_ui, int) and c.window_ui >= 8,
           "must be >= 8")
    _check(v, "cdr.fifo_depth", c.fifo_depth, isinstance(c.fifo_depth, int) and c.fifo_depth >= 4,
           "must be >= 4")
    _check(v, "cdr.glitch_filter_len", c.glitch_filter_len,
           isinstance(c.glitch_filter_len, int) and 0 <= c.glitch_filter_len < c.phases,
           "must be in [0, phases)")
    _check(v, "cdr.jitter_hysteresis", c.jitter_hysteresis,
           isinstance(c.jitter_hysteresis, int) and c.jitter_hysteresis >= 1, "must be >= 1")
    if spu_ok and phases_ok:
        _check(v, "samples_per_ui", cfg.samples_per_ui, cfg.samples_per_ui % c.phases == 0,
               f"must be divisible by cdr.phases={c.phases}")
    if v:
        raise ConfigError(v)
    return cfg


# -- key = value config files -------------------------------------------------

_OPTIONAL_FLOATS = {"driver_tau", "channel_bw", "ac_coupling_tau"}
_OPTIONAL_INTS = {"prbs_seed"}


def config_keys() -> list[str]:
    keys = [f.name for f in fields(LinkConfig) if f.name != "cdr"]
    keys += [f"cdr.{f.name}" for f in fields(CdrConfig)]
    return keys


def _field_type(key: str) -> type:
    if key.startswith("cdr."):
        return int
    default = getattr(LinkConfig(), key)
    if key in _OPTIONAL_FLOATS:
        return float
    if key in _OPTIONAL_INTS:
        return int
    return type(default)


def _parse_value(key: str, text: str):
    text = text.strip()
    if text.lower() in ("none", "auto", ""):
        if key in _OPTIONAL_FLOATS or key in _OPTIONAL_INTS:
            return None
        raise ValueError(f"{key} cannot be empty")
    kind = _field_type(key)
    if kind is int:
        return int(text, 0)
    if kind is float:
        return float(text)
    return kind(text)


def apply_overrides(cfg: LinkConfig, overrides: Mapping[str, Any]) -> LinkConfig:
    """Return a copy of ``cfg`` with ``key -> value`` pairs applied.

    String values are parsed according to the field type. Unknown keys raise
    KeyError. No validation happens here.
    """
    known = set(config_keys())
    top: dict[str, Any] = {}
    cdr: dict[str, Any] = {}
    for key, value in overrides.items():
        key = key.strip()
        if key not in known:
            raise KeyError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _parse_value(key, value)
        if key.startswith("cdr."):
            cdr[key[4:]] = value
        else:
            top[key] = value
    if cdr:
        top["cdr"] = replace(cfg.cdr, **cdr)
    return replace(cfg, **top)


def parse_config_text(text: str, base: LinkConfig | None = None) -> LinkConfig:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return apply_overrides(base or LinkConfig(), pairs)


def load_config(path) -> LinkConfig:
    return parse_config_text(Path(path).read_text())


def format_config(cfg: LinkConfig) -> str:
    lines = []
    for key in config_keys():
        if key.startswith("cdr."):
            value = getattr(cfg.cdr, key[4:])
        else:
            value = getattr(cfg, key)
        lines.append(f"{key} = {'none' if value is None else repr(value)}")
    return "\n".join(lines) + "\n"


def save_config(cfg: LinkConfig, path) -> None:
    Path(path).write_text(format_config(cfg))


def config_fingerprint(cfg: LinkConfig) -> str:
    return hashlib.sha256(format_config(cfg).encode()).hexdigest()[:16]


# -- deterministic randomness ----------------------------------------------------

# stream ids; each consumer gets an independent counter-based generator
RNG_NOISE = 1
RNG_GLITCH = 2
RNG_MISC = 3


def rng_for(seed: int, stream: int, block: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream, block).

    Keying by block index keeps results identical however a run is chunked
    for processing, provided the block size is fixed.
    """
    key = np.random.SeedSequence([seed, stream, block]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def config_as_dict(cfg: LinkConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)
