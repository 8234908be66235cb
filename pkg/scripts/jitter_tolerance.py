"""Sinusoidal-jitter and static-offset scans for the blind-oversampling CDR.

Writes jitter_scan.csv (amplitude x frequency x tracking) and static_offsets.csv.
"""
from __future__ import annotations

import argparse
import itertools
from dataclasses import dataclass
from pathlib import Path

from serdes_link import link
from serdes_link.core import LinkConfig
from serdes_link.link import Impairments


@dataclass(frozen=True)
class JitterScan:
    channel_loss_db: float = 0.0
    bits: int = 100_000
    amplitudes_ui: tuple[float, ...] = (0.1, 0.2, 0.3, 0.35, 0.4, 0.45, 0.5, 0.6, 0.8, 1.0)
    freqs_per_ui: tuple[float, ...] = (1 / 3200, 1 / 640, 1 / 200)
    # hysteresis large enough that the selected phase never moves after start
    frozen_hysteresis: int = 500


def run(scan: JitterScan, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    base = LinkConfig(channel_loss_db=scan.channel_loss_db)
    frozen = base.with_overrides({"cdr.jitter_hysteresis": scan.frozen_hysteresis})
    rows = []
    for (mode, cfg), f, a in itertools.product((("tracking", base), ("frozen", frozen)),
                                               scan.freqs_per_ui, scan.amplitudes_ui):
        r = link.run_link(cfg, scan.bits, Impairments(sj_amplitude_ui=a, sj_freq_per_ui=f))
        rows.append((mode, f, a, r.error_count, r.bit_count))
        print(f"{mode:8s} f={f:.2e}/UI A={a:.2f} UI errors={r.error_count}")
    link.write_table(out / "jitter_scan.csv",
                     ("mode", "freq_per_ui", "amplitude_ui", "error_count", "bit_count"), rows)

    offs = []
    for k in range(1, 10):
        r = link.run_link(base, 20_000, Impairments(static_offset_ui=k / 10))
        offs.append((k / 10, r.lock_ui, int(r.cdr_phase_trace[-1]), r.error_count))
    link.write_table(out / "static_offsets.csv",
                     ("offset_ui", "lock_ui", "final_phase", "error_count"), offs)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--bits", type=int, default=100_000)
    p.add_argument("--loss-db", type=float, default=0.0)
    args = p.parse_args()
    run(JitterScan(channel_loss_db=args.loss_db, bits=args.bits), args.out)
