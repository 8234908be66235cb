"""Blind-oversampling clock and data recovery.

The resolved per-sample logic stream is decimated to ``phases`` samples per
UI. Glitches are filtered, groups go through a FIFO, and a decision block
picks the sampling phase opposite the most common transition position.

Transition bins: for a UI group ``g``, bin ``j < phases - 1`` counts
``g[j] != g[j + 1]``; bin ``phases - 1`` counts the boundary transition from
the previous group's last sample into ``g[0]``, attributed to ``g``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import CdrConfig, LinkConfig


def phase_positions(cfg: LinkConfig) -> np.ndarray:
    """Sample index within a UI for each CDR phase (mid-subinterval)."""
    p = cfg.cdr.phases
    if cfg.samples_per_ui % p:
        raise ValueError(f"samples_per_ui={cfg.samples_per_ui} is not divisible by phases={p}")
    step = cfg.samples_per_ui // p
    return np.arange(p) * step + step // 2


def sample_phases(digital, cfg: LinkConfig, delay=None) -> np.ndarray:
    """Decimate per-sample logic into an ``(n_ui, phases)`` array.

    ``delay`` (samples, scalar or one value per UI) shifts the sampling
    instants earlier, which is the same as delaying the input.
    """
    digital = np.asarray(digital, dtype=np.uint8)
    pos = phase_positions(cfg)
    n = cfg.samples_per_ui
    n_ui = digital.size // n
    ui = np.arange(n_ui)
    idx = ui[:, None] * n + pos[None, :]
    if delay is not None:
        d = np.broadcast_to(np.asarray(delay, dtype=np.int64), (n_ui,))
        idx = idx - d[:, None]
    np.clip(idx, 0, max(digital.size - 1, 0), out=idx)
    return digital[idx]


class PhaseSampler:
    """Incremental ``sample_phases`` over UI-aligned blocks.

    ``delay_fn(ui_index_array) -> samples`` supplies per-UI sampling delays,
    bounded by two UIs in magnitude.
    """

    def __init__(self, cfg: LinkConfig, total_samples: int, delay_fn=None):
        self.cfg = cfg
        self.n = cfg.samples_per_ui
        self.pos = phase_positions(cfg)
        self.total = total_samples
        self.n_ui = total_samples // self.n
        self.delay_fn = delay_fn
        self.buf = np.zeros(0, dtype=np.uint8)
        self.buf_start = 0
        self.next_ui = 0

    def feed(self, block: np.ndarray) -> np.ndarray:
        block = np.asarray(block, dtype=np.uint8)
        self.buf = np.concatenate([self.buf, block])
        buf_end = self.buf_start + self.buf.size
        if buf_end >= self.total:
            last = self.n_ui
        else:
            last = max(self.next_ui, buf_end // self.n - 3)
        ui = np.arange(self.next_ui, last)
        idx = ui[:, None] * self.n + self.pos[None, :]
        if self.delay_fn is not None and ui.size:
            d = np.asarray(self.delay_fn(ui), dtype=np.int64)
            if np.any(np.abs(d) > 2 * self.n):
                raise ValueError("sampling delay must stay within two UIs")
            idx = idx - d[:, None]
        np.clip(idx, 0, self.total - 1, out=idx)
        idx -= self.buf_start
        if idx.size and idx.min() < 0:
            raise RuntimeError("sampler history too short")
        groups = self.buf[idx]
        self.next_ui = last
        keep = 6 * self.n
        if self.buf.size > keep:
            self.buf_start += self.buf.size - keep
            self.buf = self.buf[-keep:]
        return groups


def glitch_filter(groups, length: int) -> np.ndarray:
    """Remove short runs in the flattened sample stream.

    A run of at most ``length`` identical samples with the opposite value on
    both sides (across group boundaries) is overwritten with that value.
    Runs are found on the input, so all replacements are simultaneous.
    """
    groups = np.asarray(groups, dtype=np.uint8)
    if length == 0:
        return groups.copy()
    flat = groups.reshape(-1)
    if flat.size < 3:
        return groups.copy()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    short = (ends - starts) <= length
    short[0] = short[-1] = False
    edges = np.zeros(flat.size + 1, dtype=np.int64)
    np.add.at(edges, starts[short], 1)
    np.add.at(edges, ends[short], -1)
    flip = np.cumsum(edges[:-1]) > 0
    return (flat ^ flip).astype(np.uint8).reshape(groups.shape)


def transition_bins(groups: np.ndarray) -> np.ndarray:
    """Per-UI transition indicators, shape ``(n_ui, phases)``."""
    groups = np.asarray(groups, dtype=np.uint8)
    n_ui, p = groups.shape
    out = np.zeros((n_ui, p), dtype=np.uint8)
    out[:, :p - 1] = groups[:, 1:] != groups[:, :-1]
    if n_ui > 1:
        out[1:, p - 1] = groups[1:, 0] != groups[:-1, p - 1]
    return out


def candidate_phase(hist, selected: int) -> int:
    """Phase half a UI away from the dominant transition bin.

    Ties among maximal bins keep ``selected`` if it is one of their
    candidates, otherwise the lowest tied bin wins. An empty histogram ties
    everywhere and so keeps ``selected``.
    """
    hist = np.asarray(hist)
    p = hist.size
    half = math.ceil(p / 2)
    tied = np.flatnonzero(hist == hist.max())
    cands = (tied + half) % p
    if selected in cands:
        return selected
    return int(cands[0])


def wrap_step(old: int, new: int, phases: int) -> int:
    """UI slip implied by moving the sampling phase along the shorter way round.

    +1 when the move crosses forward into the next UI, -1 backward, else 0.
    """
    d = (new - old) % phases
    if d == 0:
        return 0
    if d <= phases // 2:
        return 1 if new < old else 0
    return -1 if new > old else 0


@dataclass(frozen=True)
class CdrState:
    phases: int
    selected_phase: int
    phase_histogram: tuple[int, ...]
    pending_phase: int | None = None
    pending_count: int = 0
    fifo: tuple[tuple[int, ...], ...] = ()
    ui_counter: int = 0
    last_sample: int | None = None
    windows: int = 0
    phase_trace: tuple[int, ...] = ()

    @classmethod
    def initial(cls, cfg: CdrConfig) -> CdrState:
        return cls(cfg.phases, cfg.phases // 2, (0,) * cfg.phases)


def update_decision(state: CdrState, group, cfg: CdrConfig) -> CdrState:
    """Feed one UI group through the FIFO and decision block."""
    group = tuple(int(s) for s in group)
    p = state.phases
    hist = list(state.phase_histogram)
    for j in range(p - 1):
        hist[j] += group[j] != group[j + 1]
    if state.last_sample is not None:
        hist[p - 1] += state.last_sample != group[0]
    fifo = (state.fifo + (group,))[-cfg.fifo_depth:]
    counter = state.ui_counter + 1
    new = replace(state, phase_histogram=tuple(hist), fifo=fifo, ui_counter=counter,
                  last_sample=group[-1])
    if counter < cfg.window_ui:
        return new
    selected, pending, count = _hysteresis(
        state.selected_phase, state.pending_phase, state.pending_count,
        candidate_phase(hist, state.selected_phase), cfg.jitter_hysteresis)
    return replace(new, selected_phase=selected, pending_phase=pending, pending_count=count,
                   phase_histogram=(0,) * p, ui_counter=0, windows=state.windows + 1,
                   phase_trace=state.phase_trace + (selected,))


def _hysteresis(selected, pending, count, candidate, needed):
    if candidate == selected:
        return selected, None, 0
    count = count + 1 if candidate == pending else 1
    if count >= needed:
        return candidate, None, 0
    return selected, candidate, count


@dataclass
class CdrOutput:
    recovered_bits: np.ndarray
    phase_trace: np.ndarray
    lock_ui: int
    fifo_events: int
    histograms: np.ndarray = field(repr=False)
    read_phase: np.ndarray = field(repr=False)
    slips: int = 0

    def phase_trace_csv(self, path, window_ui: int) -> None:
        with open(path, "w") as fh:
            fh.write("window,end_ui,selected_phase\n")
            for w, ph in enumerate(self.phase_trace):
                fh.write(f"{w},{(w + 1) * window_ui},{int(ph)}\n")

    def histograms_csv(self, path) -> None:
        p = self.histograms.shape[1] if self.histograms.ndim == 2 else 0
        with open(path, "w") as fh:
            fh.write("window," + ",".join(f"bin{j}" for j in range(p)) + "\n")
            for w, row in enumerate(self.histograms):
                fh.write(f"{w}," + ",".join(str(int(c)) for c in row) + "\n")


def decide_windows(trans: np.ndarray, cfg: CdrConfig) -> tuple[np.ndarray, np.ndarray]:
    """Run the windowed decision logic; returns (histograms, phase after each window)."""
    n_ui, p = trans.shape
    w = cfg.window_ui
    n_win = n_ui // w
    hists = trans[:n_win * w].reshape(n_win, w, p).sum(axis=1, dtype=np.int64)
    trace = np.empty(n_win, dtype=np.int64)
    selected, pending, count = p // 2, None, 0
    for k in range(n_win):
        cand = candidate_phase(hists[k], selected)
        selected, pending, count = _hysteresis(selected, pending, count, cand,
                                               cfg.jitter_hysteresis)
        trace[k] = selected
    return hists, trace


def recover_groups(groups, cfg: LinkConfig) -> CdrOutput:
    """Glitch filter, decide and read out recovered bits from phase groups."""
    c = cfg.cdr
    groups = np.asarray(groups, dtype=np.uint8)
    n_ui, p = groups.shape
    clean = glitch_filter(groups, c.glitch_filter_len)
    hists, trace = decide_windows(transition_bins(clean), c)

    # phase in effect during each UI: decided at the end of the previous window
    initial = p // 2
    per_window = np.concatenate([[initial], trace])
    phase_at = np.repeat(per_window, c.window_ui)[:n_ui]
    if phase_at.size < n_ui:
        phase_at = np.concatenate([phase_at, np.full(n_ui - phase_at.size, per_window[-1])])

    changes = np.flatnonzero(np.diff(np.concatenate([[initial], trace])))
    lock_ui = int((changes[-1] + 1) * c.window_ui) if changes.size else 0

    # FIFO read side: UI i leaves the FIFO `latency` UIs later, sampled at the
    # phase current then. Crossing a UI boundary shifts the read pointer.
    latency = c.fifo_depth // 2
    read_phase = phase_at[np.minimum(np.arange(n_ui) + latency, n_ui - 1)]
    offset = np.zeros(n_ui, dtype=np.int64)
    events = 0
    slips = 0
    cur = 0
    switch_at = np.flatnonzero(np.diff(read_phase)) + 1
    last = 0
    for i in switch_at:
        offset[last:i] = cur
        step = wrap_step(int(read_phase[i - 1]), int(read_phase[i]), p)
        if step:
            slips += 1
            cur += step
            occupancy = latency - cur
            if occupancy < 0 or occupancy > c.fifo_depth:
                events += 1
                cur = 0
        last = i
    offset[last:] = cur
    src = np.clip(np.arange(n_ui) + offset, 0, max(n_ui - 1, 0))
    recovered = clean[src, read_phase] if n_ui else np.zeros(0, dtype=np.uint8)
    return CdrOutput(recovered.astype(np.uint8), trace, lock_ui, events, hists, read_phase, slips)


def recover(digital, cfg: LinkConfig, delay=None) -> CdrOutput:
    """Full CDR on a per-sample logic stream."""
    return recover_groups(sample_phases(digital, cfg, delay), cfg)
