"""Train and evaluate every reward variant under Nash clearing.

    python scripts/ablation.py --episodes 300 --out runs/ablate
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from v2vtrade.harness import ABLATIONS, ablate, load_spec
from v2vtrade.harness.runs import read_csv

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk.yaml"))
    ap.add_argument("--episodes", type=int)
    ap.add_argument("--variants", default=",".join(ABLATIONS))
    ap.add_argument("--out", default="runs/ablate")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    over = {"out_dir": args.out}
    if args.episodes:
        over["episodes"] = args.episodes
    path = ablate(load_spec(args.config, **over), tuple(args.variants.split(",")))
    rows = read_csv(path)
    for v in dict.fromkeys(r["variant"] for r in rows):
        sub = [r for r in rows if r["variant"] == v]
        sw = np.median([float(r["sw_total"]) for r in sub])
        var = np.median([float(r["late_reward_var"]) for r in sub])
        print(f"{v:>14}  median SW {sw:9.2f}  late reward var {var:.4g}")
    print(path)


if __name__ == "__main__":
    main()
