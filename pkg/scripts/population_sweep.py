"""Train one mechanism at a fixed population, then 30-day evaluate every population.

    python scripts/population_sweep.py --mechanism nash --agents 20 --episodes 2000 --out runs/sweep
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path

from v2vtrade.harness import POPULATIONS, load_spec, run_training, sweep

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk.yaml"))
    ap.add_argument("--mechanism", default="nash")
    ap.add_argument("--agents", type=int, default=6)
    ap.add_argument("--episodes", type=int)
    ap.add_argument("--populations", default=",".join(map(str, POPULATIONS)))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/sweep")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    over = dict(mechanism=args.mechanism, n_agents=args.agents, out_dir=args.out, workers=args.workers)
    if args.episodes:
        over["episodes"] = args.episodes
    spec = load_spec(args.config, **over)
    ckpts = run_training(spec)
    template = str(ckpts[0].parent).replace(f"seed{spec.seeds[0]}", "seed{seed}")
    pops = tuple(int(p) for p in args.populations.split(","))
    print(sweep(replace(spec, mode="sweep", checkpoint=template, populations=pops)))


if __name__ == "__main__":
    main()
