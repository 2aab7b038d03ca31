"""Violation rate and TOP-5 of each test method on a set of roads.

Writes one JSON report per (road, method) and a CSV table next to them.
"""

import argparse
import time
from pathlib import Path

from marlot.cli import main as cli_main
from marlot.config import Config
from marlot.harness import run_campaign, save_report


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--roads", nargs="+", default=["Straight", "Merge"])
    ap.add_argument("--methods", nargs="+", default=["marl_ot", "random", "single_rl"])
    ap.add_argument("--lanes", type=int, default=2)
    ap.add_argument("--sut", default="idm")
    ap.add_argument("--budget", type=int, default=100)
    ap.add_argument("--repetitions", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--checkpoint", default="checkpoints/marl_seed0.bin")
    ap.add_argument("--single-rl-checkpoint", default="checkpoints/single_rl_seed0.bin")
    ap.add_argument("--out-dir", default="results/methods")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for road in args.roads:
        t0 = time.perf_counter()
        for method in args.methods:
            cfg = Config()
            cfg.scenario.road, cfg.scenario.lanes, cfg.sut.kind = road, args.lanes, args.sut
            h = cfg.harness
            h.method, h.budget, h.repetitions, h.seed = method, args.budget, args.repetitions, args.seed
            h.checkpoint, h.single_rl_checkpoint = args.checkpoint, args.single_rl_checkpoint
            rep = run_campaign(cfg)
            path = out / f"{road}_{args.lanes}L_{args.sut}_{method}.json"
            save_report(rep, path)
            reports.append(str(path))
            top = "None" if rep.top_k is None else f"{rep.top_k:.1f}"
            print(f"{road:<14}{method:<10} rate {rep.rate:5.1f}%  counts {rep.violation_counts}  "
                  f"TOP-5 {top}  kinds {rep.kinds}", flush=True)
        print(f"{road}: {time.perf_counter() - t0:.0f}s", flush=True)
    cli_main(["report", *reports, "--out", str(out / "table.csv")])


if __name__ == "__main__":
    main()
