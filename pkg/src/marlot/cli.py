"""Command line: ``marlot train | run | replay | report``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import Config, apply_overrides, dump_config, load_config


def _config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides += [f"harness.seed={args.seed}", f"maddpg.seed={args.seed}"]
    return apply_overrides(cfg, overrides)


def _common(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, required=seed_required, help="master seed")


def cmd_train(args) -> int:
    from .baselines import single_rl_train
    from .maddpg import evaluate, save_checkpoint, train

    cfg = _config(args)
    if args.episodes is not None:
        cfg.maddpg.episodes = args.episodes

    def progress(ep, stats):
        if ep % 50 == 0:
            print(f"episode {ep}: return {stats['return']:.3f} recent success {stats['recent_success']:.2f}",
                  flush=True)

    fn = single_rl_train if args.method == "single_rl" else train
    ck = fn(cfg.maddpg, cfg.arena, cfg.reward, progress=progress)
    save_checkpoint(ck, args.out)
    print(f"saved {args.out}")
    if args.eval:
        print(json.dumps(evaluate(ck, cfg.maddpg.eval_episodes, arena_cfg=cfg.arena, weights=cfg.reward)))
    return 0


def cmd_run(args) -> int:
    from .harness import run_campaign, save_report

    cfg = _config(args)
    for key in ("method", "budget", "repetitions", "checkpoint", "single_rl_checkpoint", "trace_dir"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg.harness, key, val)
    for key in ("road", "lanes"):
        val = getattr(args, key)
        if val is not None:
            setattr(cfg.scenario, key, val)
    if args.sut is not None:
        cfg.sut.kind = args.sut

    def progress(rep, ep, res):
        if res.violation is not None:
            print(f"rep {rep} episode {ep + 1}: {res.violation.kind.value}"
                  f"{'/' + res.violation.subkind.value if res.violation.subkind else ''}", flush=True)

    report = run_campaign(cfg, progress=progress)
    if args.out:
        save_report(report, args.out)
        dump_config(cfg, Path(args.out).with_suffix(".yaml"))
    print(f"{report.method} on {report.scenario} ({report.lanes} lanes, {report.sut}): "
          f"rate {report.rate:.1f}%  TOP-{report.k} {report.top_k if report.top_k is not None else 'None'}  "
          f"counts {report.violation_counts}")
    return 0


def cmd_replay(args) -> int:
    from .harness import load_trace
    from .replay import render_replay

    trace = load_trace(args.trace)
    files = render_replay(trace, args.out, summary=not args.no_summary)
    print(f"wrote {len(files)} files to {args.out}")
    return 0


def cmd_report(args) -> int:
    from .harness import load_report

    reports = [load_report(p) for p in args.reports]
    columns = sorted({(r.method, r.lanes) for r in reports})
    rows = sorted({r.scenario for r in reports})
    table = {(r.scenario, r.method, r.lanes): r for r in reports}
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        header = ["road"]
        for m, lanes in columns:
            header += [f"{m}/{lanes}L rate", f"{m}/{lanes}L TOP-K"]
        w.writerow(header)
        for road in rows:
            line = [road]
            for m, lanes in columns:
                r = table.get((road, m, lanes))
                if r is None:
                    line += ["", ""]
                else:
                    line += [f"{r.rate:.1f}", "None" if r.top_k is None else f"{r.top_k:.1f}"]
            w.writerow(line)
    finally:
        if args.out:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="marlot", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train surrounding-vehicle actors in the arena")
    _common(p)
    p.add_argument("--method", choices=["marl", "single_rl"], default="marl")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--eval", action="store_true", help="report enclosure success afterwards")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="run a test campaign")
    _common(p)
    p.add_argument("--method", choices=["marl_ot", "random", "ga", "single_rl"])
    p.add_argument("--road")
    p.add_argument("--lanes", type=int)
    p.add_argument("--sut", choices=["idm", "heuristic"])
    p.add_argument("--budget", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--single-rl-checkpoint", dest="single_rl_checkpoint")
    p.add_argument("--trace-dir", dest="trace_dir")
    p.add_argument("--out", help="write the report as JSON (config snapshot alongside)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="render a recorded trace")
    p.add_argument("trace")
    p.add_argument("--out", required=True)
    p.add_argument("--no-summary", action="store_true")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="aggregate campaign reports into a CSV table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
