"""Regenerate the headline link results into one directory.

    python scripts/reproduce_results.py --out results --jobs 4
"""
from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass, field
from pathlib import Path

from serdes_link import link, metrics
from serdes_link.core import LinkConfig, save_config

log = logging.getLogger("reproduce")


@dataclass(frozen=True)
class Experiment:
    link: LinkConfig = field(default_factory=LinkConfig)
    corner_bits: int = 1_000_000
    search_bits: int = 100_000
    loss_grid: tuple[float, ...] = (30.0, 32.0, 33.0, 34.0, 34.5, 35.0, 35.5, 36.0, 38.0, 40.0)
    loss_bracket: tuple[float, float] = (20.0, 45.0)
    loss_resolution_db: float = 0.25
    sensitivity_resolution_v: float = 0.5e-3
    bitrates: tuple[float, ...] = (1e9, 1.5e9, 2e9, 2.5e9)
    fixed_channel_bw: float = 1.5e9


def run(exp: Experiment, out: Path, jobs: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_config(exp.link, out / "config.cfg")

    log.info("corner run, %d bits", exp.corner_bits)
    r = link.run_link(exp.link, exp.corner_bits)
    r.to_csv(out / "corner_run_report.csv")

    log.info("loss sweep")
    rows = link.loss_sweep(exp.link, exp.loss_grid, exp.search_bits, jobs=jobs)
    link.write_table(out / "loss_sweep.csv", ("loss_db", "ber", "error_count", "bit_count", "locked"),
                     [(x.loss_db, x.ber, x.error_count, x.bit_count, x.locked) for x in rows])

    log.info("max-loss and sensitivity searches")
    best = link.max_loss_search(exp.link, exp.search_bits, *exp.loss_bracket,
                                exp.loss_resolution_db)
    sens = link.sensitivity_search(exp.link, exp.search_bits,
                                   resolution_v=exp.sensitivity_resolution_v)
    link.write_table(out / "corner_searches.csv", ("key", "value"), [
        ("max_loss_db", best), ("analytic_edge_db", link.analytic_loss_edge(exp.link)),
        ("sensitivity_received_v", sens.received_swing_v),
        ("sensitivity_launch_v", sens.launch_swing_v), ("sensitivity_step_v", sens.step_v)])

    for name, cfg in (("tied_bw", exp.link),
                      ("fixed_bw", exp.link.with_overrides({"channel_bw": exp.fixed_channel_bw}))):
        log.info("sensitivity sweep (%s)", name)
        srows = link.sensitivity_sweep(cfg, exp.bitrates, exp.search_bits,
                                       resolution_db=exp.loss_resolution_db,
                                       resolution_v=exp.sensitivity_resolution_v, jobs=jobs)
        link.write_table(out / f"sensitivity_{name}.csv", link.SensitivityRow.HEADER,
                         [s.as_tuple() for s in srows])

    b = metrics.budget_report(metrics.PowerBudget.design())
    (out / "budget.md").write_text(b.to_markdown())
    (out / "area.md").write_text(metrics.area_report().to_markdown())
    log.info("corner errors=%d max_loss=%.2f dB sensitivity=%.2f mV",
             r.error_count, best, sens.received_swing_v * 1e3)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    run(Experiment(), args.out, args.jobs)
