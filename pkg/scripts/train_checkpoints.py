"""Train the MARL and independent-learner checkpoints used by the campaigns."""

import argparse
import json
import time
from pathlib import Path

from marlot.baselines import single_rl_train
from marlot.config import Config, load_config
from marlot.maddpg import evaluate, save_checkpoint, train


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="checkpoints")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config")
    ap.add_argument("--episodes", type=int)
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else Config()
    cfg.maddpg.seed = args.seed
    if args.episodes:
        cfg.maddpg.episodes = args.episodes
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name, fn in (("marl", train), ("single_rl", single_rl_train)):
        t0 = time.perf_counter()
        ck = fn(cfg.maddpg, cfg.arena, cfg.reward)
        secs = time.perf_counter() - t0
        path = out / f"{name}_seed{args.seed}.bin"
        save_checkpoint(ck, path)
        ev = evaluate(ck, cfg.maddpg.eval_episodes, arena_cfg=cfg.arena, weights=cfg.reward)
        summary[name] = {"path": str(path), "train_seconds": round(secs, 1), **ev}
        print(f"{name}: {secs:.0f}s, enclosure success {ev['success_rate']:.2f}, "
              f"distance {ev['mean_initial_distance']:.3f} -> {ev['mean_final_distance']:.3f}")
    (out / f"summary_seed{args.seed}.json").write_text(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
