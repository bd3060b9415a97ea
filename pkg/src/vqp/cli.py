"""Command-line entry point: ``vqp train|eval|compare|lower|export-waveform``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .exceptions import VQPError


def _dump(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def cmd_train(args) -> int:
    from .harness import TrainConfig, run_experiment

    cfg = TrainConfig.load(args.config)
    out = Path(args.out) if args.out else Path(args.config).with_suffix("").with_name(Path(args.config).stem + "_run")
    report = run_experiment(cfg, out, workers=args.workers)
    _dump(report.summary)
    print(f"report: {out / 'report.json'}", file=sys.stderr)
    return 1 if report.failures else 0


def cmd_eval(args) -> int:
    from .harness import RunReport, verify_report

    report = RunReport.load(args.report)
    problems = verify_report(report)
    _dump({"summary": report.summary, "consistent": not problems, "problems": problems})
    return 1 if problems else 0


def cmd_compare(args) -> int:
    from .harness import TrainConfig, compare

    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    result = compare(cfg, args.a, args.b, out_dir=args.out, cross_device=args.cross_device, workers=args.workers)
    _dump({k: result[k] for k in ("modes", "summaries", "evaluations", "equal_budget")}
          | ({"cross_device": result["cross_device"]} if "cross_device" in result else {}))
    return 0 if result["equal_budget"] else 1


def cmd_lower(args) -> int:
    from .circuit import Circuit, lower
    from .device import get_device
    from .pulse import schedule_duration, schedule_to_dict

    dev = get_device(args.device)
    circuit = Circuit.load(args.circuit)
    sched = lower(circuit, dev, measure=args.measure, name=Path(args.circuit).stem)
    if args.out:
        Path(args.out).write_text(json.dumps(schedule_to_dict(sched), indent=1) + "\n")
    if args.report_duration or not args.out:
        dur = schedule_duration(sched)
        _dump({"device": dev.name, "duration_dt": dur, "duration_ns": dur * dev.dt_ns, "instructions": len(sched)})
    return 0


def cmd_export_waveform(args) -> int:
    from .pulse import export_waveform_csv, export_waveform_svg, schedule_from_dict

    sched = schedule_from_dict(json.loads(Path(args.schedule).read_text()))
    out = args.out or f"{Path(args.schedule).stem}_{'_'.join(args.channel)}.{args.fmt}"
    if args.fmt == "csv":
        export_waveform_csv(sched, args.channel, out, nonzero_only=args.nonzero_only)
    else:
        export_waveform_svg(sched, args.channel, out, title=Path(args.schedule).stem)
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vqp", description="Variational quantum pulse learning toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train per a JSON config and write a report")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="output directory (default: <config>_run)")
    t.add_argument("--workers", type=int, default=1, help="seeds trained in parallel")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="summarize a report and recheck its accuracies")
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="run two training modes under one config")
    c.add_argument("--config", help="JSON config (default: built-in synthetic setup)")
    c.add_argument("--a", default="vqp")
    c.add_argument("--b", default="vqc-bo")
    c.add_argument("--cross-device", metavar="DEVICE", help="also test trained parameters on this device")
    c.add_argument("--out")
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_compare)

    lo = sub.add_parser("lower", help="compile a circuit JSON to a pulse schedule")
    lo.add_argument("--circuit", required=True)
    lo.add_argument("--device", required=True, help="shipped device name or device JSON path")
    lo.add_argument("--out", help="schedule JSON to write")
    lo.add_argument("--report-duration", action="store_true", help="print the schedule duration")
    lo.add_argument("--measure", action="store_true", help="append measurement of every qubit")
    lo.set_defaults(func=cmd_lower)

    w = sub.add_parser("export-waveform", help="render schedule channels to CSV or SVG")
    w.add_argument("--schedule", required=True)
    w.add_argument("--channel", action="append", required=True, help="channel name, e.g. d0 or u0_1 (repeatable)")
    w.add_argument("--fmt", choices=("csv", "svg"), default="csv")
    w.add_argument("--out")
    w.add_argument("--nonzero-only", action="store_true", help="CSV: skip idle samples")
    w.set_defaults(func=cmd_export_waveform)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (VQPError, OSError, json.JSONDecodeError) as exc:
        print(f"vqp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
