"""End-to-end link runs, BER measurement and the loss/sensitivity sweeps."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import afe
from .cdr import CdrOutput, PhaseSampler, phase_positions, recover_groups
from .core import (RNG_GLITCH, RNG_NOISE, LinkConfig, ParallelFrame, Waveform, as_bits,
                   config_fingerprint, rng_for, validate_config)
from .prbs import LfsrSpec, align_and_count, prbs_generate
from .serdes_fsm import deserialize, serialize

BLOCK_UI = 4096
MAX_LAG = 8
MIN_BITS = 1000


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class Impairments:
    """Harness-level disturbances.

    Timing disturbances shift the CDR sampling instants (equivalently, delay
    the received signal). ``glitch_rate`` flips isolated samples of the
    resolved logic stream.
    """

    static_offset_ui: float = 0.0
    sj_amplitude_ui: float = 0.0
    sj_freq_per_ui: float = 0.0
    glitch_rate: float = 0.0

    @property
    def has_timing(self) -> bool:
        return self.static_offset_ui != 0 or self.sj_amplitude_ui != 0

    @property
    def phase_stationary(self) -> bool:
        return self.sj_amplitude_ui == 0

    def delay_fn(self, samples_per_ui: int):
        if not self.has_timing:
            return None
        static, amp, f = self.static_offset_ui, self.sj_amplitude_ui, self.sj_freq_per_ui

        def delay(ui):
            shift = static + amp * np.sin(2 * np.pi * f * ui)
            return np.rint(shift * samples_per_ui).astype(np.int64)
        return delay


@dataclass
class RunReport:
    ber: float
    error_count: int
    bit_count: int
    lock_ui: int
    aligned_lag: int
    locked: bool
    preamble_bits: int
    n_bits: int
    fifo_events: int
    phase_slips: int
    config_fingerprint: str
    cdr_phase_trace: np.ndarray = field(repr=False)
    rx_eye_v: float = float("nan")
    cdr: CdrOutput | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.locked and self.error_count == 0

    def rows(self) -> list[tuple[str, str]]:
        final_phase = int(self.cdr_phase_trace[-1]) if self.cdr_phase_trace.size else -1
        return [
            ("ber", f"{self.ber:.6e}"),
            ("error_count", str(self.error_count)),
            ("bit_count", str(self.bit_count)),
            ("n_bits", str(self.n_bits)),
            ("preamble_bits", str(self.preamble_bits)),
            ("lock_ui", str(self.lock_ui)),
            ("aligned_lag", str(self.aligned_lag)),
            ("locked", str(int(self.locked))),
            ("passed", str(int(self.passed))),
            ("fifo_events", str(self.fifo_events)),
            ("phase_slips", str(self.phase_slips)),
            ("final_phase", str(final_phase)),
            ("rx_eye_v", f"{self.rx_eye_v:.6e}"),
            ("config_fingerprint", self.config_fingerprint),
        ]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("key,value\n")
            for k, v in self.rows():
                fh.write(f"{k},{v}\n")


def _inject_glitches(digital: np.ndarray, rate: float, rng: np.random.Generator,
                     spacing: int) -> np.ndarray:
    pos = np.flatnonzero(rng.random(digital.size) < rate)
    if pos.size > 1:
        gap = np.diff(pos)
        crowded = np.zeros(pos.size, dtype=bool)
        crowded[1:] |= gap < spacing
        crowded[:-1] |= gap < spacing
        pos = pos[~crowded]
    out = digital.copy()
    out[pos] ^= 1
    return out


class EyeProbe:
    """Running inner eye of the biased RX input at every sample position.

    Tracks, per position within the UI, the lowest sample above the bias and
    the highest sample at or below it, over UIs from ``start_ui`` on.
    """

    def __init__(self, cfg: LinkConfig, start_ui: int = 0):
        self.n = cfg.samples_per_ui
        self.mid = cfg.vdd / 2
        self.start_ui = start_ui
        self.upper = np.full(self.n, np.inf)
        self.lower = np.full(self.n, -np.inf)

    def feed(self, v: np.ndarray, first_ui: int) -> None:
        folded = v.reshape(-1, self.n)
        skip = max(0, self.start_ui - first_ui)
        folded = folded[skip:]
        if not folded.size:
            return
        up = np.where(folded > self.mid, folded, np.inf).min(axis=0)
        lo = np.where(folded <= self.mid, folded, -np.inf).max(axis=0)
        np.minimum(self.upper, up, out=self.upper)
        np.maximum(self.lower, lo, out=self.lower)

    def opening(self, position: int) -> float:
        """Inner peak-to-peak opening (V) at a sample position; <= 0 when closed."""
        up, lo = self.upper[position], self.lower[position]
        if not (np.isfinite(up) and np.isfinite(lo)):
            return 0.0
        return float(up - lo)

    def slicer_swing(self, position: int) -> float:
        """Twice the smallest distance from the slicer threshold (V pp)."""
        up, lo = self.upper[position], self.lower[position]
        if not (np.isfinite(up) and np.isfinite(lo)):
            return 0.0
        return float(2 * min(up - self.mid, self.mid - lo))


def simulate_groups(cfg: LinkConfig, bits, impairments: Impairments | None = None,
                    launch_swing: float | None = None,
                    probe: EyeProbe | None = None) -> np.ndarray:
    """TX through RX resolve and phase sampling, processed in fixed UI blocks.

    ``launch_swing`` replaces the rail-to-rail launch with that peak-to-peak
    swing and bypasses the flat channel loss (bandwidth still applies).
    """
    imp = impairments or Impairments()
    bits = as_bits(bits)
    n = cfg.samples_per_ui
    if launch_swing is None:
        scale = cfg.loss_factor if cfg.channel_loss_db else 1.0
    else:
        scale = launch_swing / cfg.vdd
    driver = afe.FirstOrderFilter("lowpass", cfg.driver_tau_value, cfg.dt, state=0.0)
    chan = afe.FirstOrderFilter("lowpass", afe.channel_tau(cfg), cfg.dt)
    dc = float(np.mean(bits)) * cfg.vdd * scale if bits.size else 0.0
    coupler = afe.FirstOrderFilter("highpass", cfg.ac_coupling_tau_value, cfg.dt, state=dc)
    sampler = PhaseSampler(cfg, bits.size * n, imp.delay_fn(n))
    spacing = n
    out = []
    for b, start in enumerate(range(0, bits.size, BLOCK_UI)):
        x = afe.nrz(bits[start:start + BLOCK_UI], cfg)
        v = driver.process(x)
        if scale != 1.0:
            v = v * scale
        v = chan.process(v, initial=v[0])
        v = coupler.process(v) + cfg.vdd / 2
        if probe is not None:
            probe.feed(v, start)
        d = afe.resolve_samples(v, cfg, rng_for(cfg.rng_seed, RNG_NOISE, b))
        if imp.glitch_rate > 0:
            d = _inject_glitches(d, imp.glitch_rate, rng_for(cfg.rng_seed, RNG_GLITCH, b), spacing)
        out.append(sampler.feed(d))
    if not out:
        return np.zeros((0, cfg.cdr.phases), dtype=np.uint8)
    return np.concatenate(out)


def count_start(cdr_out: CdrOutput, cfg: LinkConfig, stationary: bool = True) -> int:
    """First UI counted toward BER.

    Steady state begins at lock, capped at the acquisition bound
    ``window_ui * (jitter_hysteresis + 1)`` so that a CDR still moving after
    that point is charged for its errors.
    """
    bound = cfg.cdr.window_ui * (cfg.cdr.jitter_hysteresis + 1)
    return min(cdr_out.lock_ui, bound) if stationary else bound


def measure(cfg: LinkConfig, tx_bits, cdr_out: CdrOutput, stationary: bool = True) -> RunReport:
    tx_bits = as_bits(tx_bits)
    start = count_start(cdr_out, cfg, stationary)
    rx = cdr_out.recovered_bits
    if rx.size - start <= MAX_LAG + 1:
        raise ValueError("too few bits after lock to measure")
    al = align_and_count(tx_bits, rx, MAX_LAG, start=start)
    if al.locked:
        errors, compared = al.error_count, al.compared
        ber = errors / compared
    else:
        errors, compared = al.error_count, al.compared
        ber = max(0.5, errors / compared)
    return RunReport(
        ber=ber, error_count=errors, bit_count=compared, lock_ui=cdr_out.lock_ui,
        aligned_lag=al.lag, locked=al.locked, preamble_bits=start, n_bits=int(tx_bits.size),
        fifo_events=cdr_out.fifo_events, phase_slips=cdr_out.slips,
        config_fingerprint=config_fingerprint(cfg), cdr_phase_trace=cdr_out.phase_trace,
        cdr=cdr_out)


def run_link(cfg: LinkConfig, n_bits: int, impairments: Impairments | None = None,
             launch_swing: float | None = None) -> RunReport:
    """PRBS through the whole link; errors counted after lock and alignment."""
    validate_config(cfg)
    if n_bits < MIN_BITS:
        raise ValueError(f"n_bits must be >= {MIN_BITS}")
    imp = impairments or Impairments()
    tx = prbs_generate(LfsrSpec(cfg.prbs_order, cfg.prbs_seed), n_bits)
    probe = EyeProbe(cfg, cfg.cdr.window_ui * (cfg.cdr.jitter_hysteresis + 1))
    groups = simulate_groups(cfg, tx, imp, launch_swing, probe)
    out = recover_groups(groups, cfg)
    report = measure(cfg, tx, out, imp.phase_stationary)
    if imp.phase_stationary and out.read_phase.size > probe.start_ui:
        # worst eye over every phase actually used for decisions after acquisition
        shift = int(round(imp.static_offset_ui * cfg.samples_per_ui))
        used = np.unique(out.read_phase[probe.start_ui:])
        pos = (phase_positions(cfg)[used] - shift) % cfg.samples_per_ui
        report.rx_eye_v = min(probe.slicer_swing(int(k)) for k in pos)
    return report


def run_frames(cfg: LinkConfig, frames: Sequence[ParallelFrame], preamble_bits: int = 1024,
               impairments: Impairments | None = None) -> tuple[list[ParallelFrame], RunReport]:
    """Send frames behind a PRBS preamble; return the deserialized frames.

    The preamble gives the CDR time to lock and fixes the frame alignment.
    """
    validate_config(cfg)
    imp = impairments or Impairments()
    pre = prbs_generate(LfsrSpec(cfg.prbs_order, cfg.prbs_seed), preamble_bits)
    payload = serialize(frames)
    tx = np.concatenate([pre, payload])
    out = recover_groups(simulate_groups(cfg, tx, imp), cfg)
    report = measure(cfg, tx, out, imp.phase_stationary)
    rx = out.recovered_bits
    lag = report.aligned_lag
    got, _ = deserialize(rx[preamble_bits + lag:preamble_bits + lag + payload.size])
    return got, report


# -- searches ------------------------------------------------------------------


def _passes(cfg: LinkConfig, n_bits: int, impairments=None, launch_swing=None) -> bool:
    return run_link(cfg, n_bits, impairments, launch_swing).passed


def max_loss_search(cfg: LinkConfig, n_bits: int, loss_lo: float, loss_hi: float,
                    resolution_db: float = 0.25) -> float:
    """Largest channel loss (within ``resolution_db``) with zero errors.

    Assumes error-freedom is monotone in loss.
    """
    if not loss_lo < loss_hi:
        raise BracketError("need loss_lo < loss_hi")
    if not _passes(replace(cfg, channel_loss_db=loss_lo), n_bits):
        raise BracketError(f"link fails at loss_lo={loss_lo} dB")
    if _passes(replace(cfg, channel_loss_db=loss_hi), n_bits):
        raise BracketError(f"link passes at loss_hi={loss_hi} dB")
    lo, hi = loss_lo, loss_hi
    while hi - lo > resolution_db:
        mid = 0.5 * (lo + hi)
        if _passes(replace(cfg, channel_loss_db=mid), n_bits):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class Sensitivity:
    launch_swing_v: float   # smallest error-free launch swing found
    received_swing_v: float  # slicer-referred RX swing at the decision phases for that launch
    step_v: float           # width of the final bisection bracket


def sensitivity_search(cfg: LinkConfig, n_bits: int, swing_lo: float = 1e-3,
                       swing_hi: float | None = None,
                       resolution_v: float = 0.5e-3) -> Sensitivity:
    """Bisect the launch swing (V pp, flat loss bypassed) down to the error-free edge.

    The received swing is the slicer-referred eye (twice the closest approach
    to the vdd/2 threshold) at the phases the CDR decided on, for the
    smallest passing launch swing.
    """
    swing_hi = cfg.vdd if swing_hi is None else swing_hi
    if not swing_lo < swing_hi:
        raise BracketError("need swing_lo < swing_hi")
    best = run_link(cfg, n_bits, launch_swing=swing_hi)
    if not best.passed:
        raise BracketError(f"link fails at swing_hi={swing_hi} V")
    if _passes(cfg, n_bits, launch_swing=swing_lo):
        raise BracketError(f"link passes at swing_lo={swing_lo} V")
    lo, hi = swing_lo, swing_hi
    while hi - lo > resolution_v:
        mid = 0.5 * (lo + hi)
        r = run_link(cfg, n_bits, launch_swing=mid)
        if r.passed:
            hi, best = mid, r
        else:
            lo = mid
    return Sensitivity(hi, best.rx_eye_v, hi - lo)


@dataclass(frozen=True)
class SensitivityRow:
    bitrate: float
    sensitivity_v: float
    launch_swing_v: float
    max_loss_db: float

    HEADER = ("bitrate", "sensitivity_v", "launch_swing_v", "max_loss_db")

    def as_tuple(self):
        return (self.bitrate, self.sensitivity_v, self.launch_swing_v, self.max_loss_db)


def _sensitivity_point(args) -> SensitivityRow:
    cfg, bitrate, n_bits, loss_lo, loss_hi, res_db, res_v = args
    c = replace(cfg, bitrate=bitrate)
    validate_config(c)
    sens = sensitivity_search(c, n_bits, resolution_v=res_v)
    loss = max_loss_search(c, n_bits, loss_lo, loss_hi, res_db)
    return SensitivityRow(bitrate, sens.received_swing_v, sens.launch_swing_v, loss)


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def sensitivity_sweep(base_cfg: LinkConfig, bitrates: Sequence[float], n_bits: int = 100_000,
                      loss_lo: float = 10.0, loss_hi: float = 50.0, resolution_db: float = 0.25,
                      resolution_v: float = 0.5e-3, jobs: int = 1) -> list[SensitivityRow]:
    if not len(bitrates):
        raise ValueError("bitrates must be nonempty")
    items = [(base_cfg, float(br), n_bits, loss_lo, loss_hi, resolution_db, resolution_v)
             for br in bitrates]
    rows = _map(_sensitivity_point, items, jobs)
    return sorted(rows, key=lambda r: r.bitrate)


@dataclass(frozen=True)
class LossRow:
    loss_db: float
    ber: float
    error_count: int
    bit_count: int
    locked: bool


def _loss_point(args) -> LossRow:
    cfg, loss, n_bits = args
    r = run_link(replace(cfg, channel_loss_db=loss), n_bits)
    return LossRow(loss, r.ber, r.error_count, r.bit_count, r.locked)


def loss_sweep(cfg: LinkConfig, losses: Sequence[float], n_bits: int,
               jobs: int = 1) -> list[LossRow]:
    rows = _map(_loss_point, [(cfg, float(x), n_bits) for x in losses], jobs)
    return sorted(rows, key=lambda r: r.loss_db)


def write_table(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    def fmt(x):
        if isinstance(x, bool):
            return str(int(x))
        if isinstance(x, float):
            return repr(x)
        return str(x)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


# -- waveforms and eyes ---------------------------------------------------------


@dataclass
class StageWaveforms:
    tx: Waveform
    channel: Waveform
    rx_input: Waveform
    digital: np.ndarray


def stage_waveforms(cfg: LinkConfig, bits) -> StageWaveforms:
    """Whole-waveform stage outputs for inspection and dumps."""
    validate_config(cfg)
    bits = as_bits(bits)
    tx = afe.drive(bits, cfg)
    ch = afe.channel(tx, cfg, initial=float(tx.samples[0]) * (cfg.loss_factor if cfg.channel_loss_db else 1.0))
    dc = float(np.mean(bits)) * cfg.vdd * (cfg.loss_factor if cfg.channel_loss_db else 1.0)
    rx = afe.ac_couple_and_bias(ch, cfg, dc_level=dc)
    digital = afe.rx_resolve(rx, cfg, rng_for(cfg.rng_seed, RNG_NOISE, 0))
    return StageWaveforms(tx, ch, rx, digital)


@dataclass
class EyeHistogram:
    counts: np.ndarray      # (samples_per_ui, bins_v)
    v_edges: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("phase_bin,volt_bin,count\n")
            for (p, v), c in np.ndenumerate(self.counts):
                if c:
                    fh.write(f"{p},{v},{int(c)}\n")


def eye_diagram(w: Waveform, cfg: LinkConfig, bins_v: int = 64,
                v_range: tuple[float, float] | None = None) -> EyeHistogram:
    """Fold the waveform modulo one UI into a phase x voltage histogram."""
    n = cfg.samples_per_ui
    if len(w) < 100 * n:
        raise ValueError(f"eye needs at least 100 UI ({100 * n} samples), got {len(w)}")
    if bins_v < 1:
        raise ValueError("bins_v must be >= 1")
    v = w.samples
    lo, hi = (float(v.min()), float(v.max())) if v_range is None else v_range
    if hi <= lo:
        hi = lo + 1e-12
    edges = np.linspace(lo, hi, bins_v + 1)
    vb = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, bins_v - 1)
    pb = np.arange(v.size) % n
    counts = np.zeros((n, bins_v), dtype=np.int64)
    np.add.at(counts, (pb, vb), 1)
    return EyeHistogram(counts, edges)


def eye_opening(w: Waveform, cfg: LinkConfig, threshold: float | None = None) -> np.ndarray:
    """Vertical eye opening per phase: lowest sample above threshold minus highest below.

    Non-positive where the eye is closed.
    """
    n = cfg.samples_per_ui
    thr = float(np.mean(w.samples)) if threshold is None else threshold
    n_ui = len(w) // n
    folded = w.samples[:n_ui * n].reshape(n_ui, n)
    upper = np.where(folded > thr, folded, np.inf).min(axis=0)
    lower = np.where(folded <= thr, folded, -np.inf).max(axis=0)
    return np.where(np.isfinite(upper) & np.isfinite(lower), upper - lower, -np.inf)


def analytic_loss_edge(cfg: LinkConfig) -> float:
    """Loss at which the settled swing equals the receiver sensitivity (dB)."""
    return 20 * math.log10(cfg.vdd / (2 * cfg.rx_deadzone))
