"""Identical fuzzing campaigns against the IDM and the heuristic ego policy."""

import argparse
from pathlib import Path

from marlot.config import Config
from marlot.harness import run_campaign, save_report


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--roads", nargs="+", default=["Straight", "Merge"])
    ap.add_argument("--lanes", type=int, default=2)
    ap.add_argument("--budget", type=int, default=100)
    ap.add_argument("--repetitions", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--checkpoint", default="checkpoints/marl_seed0.bin")
    ap.add_argument("--out-dir", default="results/suts")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for road in args.roads:
        rates = {}
        for sut in ("idm", "heuristic"):
            cfg = Config()
            cfg.scenario.road, cfg.scenario.lanes, cfg.sut.kind = road, args.lanes, sut
            h = cfg.harness
            h.method, h.budget, h.repetitions, h.seed, h.checkpoint = (
                "marl_ot", args.budget, args.repetitions, args.seed, args.checkpoint)
            rep = run_campaign(cfg)
            save_report(rep, out / f"{road}_{args.lanes}L_{sut}.json")
            rates[sut] = rep.rate
            print(f"{road:<14}{sut:<10} rate {rep.rate:5.1f}%  kinds {rep.kinds}  outcomes {rep.outcomes}",
                  flush=True)
        verdict = "holds" if rates["heuristic"] >= rates["idm"] else "reversed"
        print(f"{road}: heuristic >= idm {verdict}")


if __name__ == "__main__":
    main()
