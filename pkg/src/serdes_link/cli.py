"""Command-line entry point: ``serdes-link <command> [options]``.

Exit status: 0 on success, 1 on usage/config/IO errors, 2 when ``--strict``
is given and a run fails to lock or shows errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import link, metrics
from .core import ConfigError, LinkConfig, apply_overrides, load_config, save_config, validate_config
from .prbs import LfsrSpec, prbs_generate

log = logging.getLogger("serdes_link")

COMMANDS = ("run", "sweep-loss", "sweep-sensitivity", "eye", "budget", "dump-waveforms")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--bits", type=int, default=None, help="bits per run")
    common.add_argument("--seed", type=int, default=None, help="override rng_seed")
    common.add_argument("--strict", action="store_true", help="exit 2 on failed runs")
    common.add_argument("--max-ui", type=int, default=200, help="UI cap for waveform dumps")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="config override (repeatable)")
    common.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")

    p = _Parser(prog="serdes-link", description="All-digital SerDes link simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="single PRBS BER run")

    sl = sub.add_parser("sweep-loss", parents=[common], help="BER vs loss and max-loss search")
    sl.add_argument("--losses", type=_float_list, default=None,
                    help="comma-separated loss grid in dB (default 30..38 step 1)")
    sl.add_argument("--loss-lo", type=float, default=20.0)
    sl.add_argument("--loss-hi", type=float, default=45.0)
    sl.add_argument("--resolution-db", type=float, default=0.25)

    ss = sub.add_parser("sweep-sensitivity", parents=[common],
                        help="sensitivity and max loss vs bitrate")
    ss.add_argument("--bitrates", type=_float_list, default=[1e9, 1.5e9, 2e9])
    ss.add_argument("--resolution-db", type=float, default=0.25)
    ss.add_argument("--resolution-v", type=float, default=0.5e-3)

    ey = sub.add_parser("eye", parents=[common], help="eye histogram at the RX input")
    ey.add_argument("--bins-v", type=int, default=64)

    sub.add_parser("budget", parents=[common], help="power and area report")
    sub.add_parser("dump-waveforms", parents=[common], help="stage waveforms as CSV")
    return p


def resolve_config(args) -> LinkConfig:
    if args.config is not None:
        if not args.config.is_file():
            raise FileNotFoundError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    else:
        cfg = LinkConfig()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["rng_seed"] = str(args.seed)
    cfg = apply_overrides(cfg, overrides)
    return validate_config(cfg)


def _out_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    probe = path / ".write_test"
    probe.write_text("")
    probe.unlink()
    return path


def cmd_run(cfg, args, out) -> int:
    n = args.bits or 1_000_000
    report = link.run_link(cfg, n)
    report.to_csv(out / "run_report.csv")
    report.cdr.phase_trace_csv(out / "phase_trace.csv", cfg.cdr.window_ui)
    save_config(cfg, out / "config_used.cfg")
    print(f"errors={report.error_count} bits={report.bit_count} ber={report.ber:.3e} "
          f"lock_ui={report.lock_ui} locked={report.locked}")
    return 0 if report.passed or not args.strict else 2


def cmd_sweep_loss(cfg, args, out) -> int:
    n = args.bits or 100_000
    losses = args.losses or [float(x) for x in np.arange(30.0, 38.5, 1.0)]
    rows = link.loss_sweep(cfg, losses, n, jobs=args.jobs)
    link.write_table(out / "loss_sweep.csv",
                     ("loss_db", "ber", "error_count", "bit_count", "locked"),
                     [(r.loss_db, r.ber, r.error_count, r.bit_count, r.locked) for r in rows])
    status = 0
    try:
        best = link.max_loss_search(cfg, n, args.loss_lo, args.loss_hi, args.resolution_db)
        link.write_table(out / "max_loss.csv", ("key", "value"),
                         [("max_loss_db", best), ("resolution_db", args.resolution_db),
                          ("bits", n)])
        print(f"max error-free loss: {best:.2f} dB")
    except link.BracketError as e:
        log.error("max-loss search: %s", e)
        status = 2 if args.strict else 0
    for r in rows:
        print(f"{r.loss_db:6.2f} dB  errors={r.error_count:8d}  ber={r.ber:.3e}")
    return status


def cmd_sweep_sensitivity(cfg, args, out) -> int:
    n = args.bits or 100_000
    rows = link.sensitivity_sweep(cfg, args.bitrates, n, resolution_db=args.resolution_db,
                                  resolution_v=args.resolution_v, jobs=args.jobs)
    link.write_table(out / "sensitivity_sweep.csv", link.SensitivityRow.HEADER,
                     [r.as_tuple() for r in rows])
    for r in rows:
        print(f"{r.bitrate / 1e9:5.2f} Gbps  sensitivity={r.sensitivity_v * 1e3:6.2f} mV  "
              f"launch={r.launch_swing_v * 1e3:6.2f} mV  max_loss={r.max_loss_db:5.2f} dB")
    return 0


def _stimulus(cfg, args):
    n_ui = args.max_ui
    return prbs_generate(LfsrSpec(cfg.prbs_order, cfg.prbs_seed), n_ui)


def cmd_eye(cfg, args, out) -> int:
    if args.max_ui < 100:
        raise UsageError("eye needs --max-ui >= 100")
    stages = link.stage_waveforms(cfg, _stimulus(cfg, args))
    eye = link.eye_diagram(stages.rx_input, cfg, args.bins_v)
    eye.to_csv(out / "eye.csv")
    link.write_table(out / "eye_volt_bins.csv", ("volt_bin", "v_low", "v_high"),
                     [(i, float(lo), float(hi))
                      for i, (lo, hi) in enumerate(zip(eye.v_edges[:-1], eye.v_edges[1:]))])
    print(f"eye: {eye.counts.shape[0]} phase bins x {eye.counts.shape[1]} volt bins, "
          f"{eye.total} samples")
    return 0


def cmd_budget(cfg, args, out) -> int:
    b = metrics.budget_report(replace(metrics.PowerBudget.design(),
                                      bitrate=metrics._dec(cfg.bitrate),
                                      supply=metrics._dec(cfg.vdd)))
    a = metrics.area_report()
    (out / "budget.csv").write_text(b.to_csv())
    (out / "budget.md").write_text(b.to_markdown())
    (out / "area.csv").write_text(a.to_csv())
    (out / "area.md").write_text(a.to_markdown())
    link_only = metrics.budget_report(metrics.PowerBudget.link_only())
    print(b.to_markdown())
    print(f"Link only (TX + RX): {link_only.total_mw} mW")
    print()
    print(a.to_markdown())
    return 0


def cmd_dump_waveforms(cfg, args, out) -> int:
    stages = link.stage_waveforms(cfg, _stimulus(cfg, args))
    stages.tx.to_csv(out / "tx.csv")
    stages.channel.to_csv(out / "channel.csv")
    stages.rx_input.to_csv(out / "rx_input.csv")
    print(f"wrote {len(stages.tx)} samples per stage to {out}")
    return 0


HANDLERS = {
    "run": cmd_run,
    "sweep-loss": cmd_sweep_loss,
    "sweep-sensitivity": cmd_sweep_sensitivity,
    "eye": cmd_eye,
    "budget": cmd_budget,
    "dump-waveforms": cmd_dump_waveforms,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        out = _out_dir(args.out)
        return HANDLERS[args.command](cfg, args, out)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except ConfigError as e:
        for name, value, why in e.violations:
            print(f"config error: {name} = {value!r}: {why}", file=sys.stderr)
        return 1
    except (KeyError, ValueError, FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
