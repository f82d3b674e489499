"""Run the desk-scale comparison and the generalization smoke run.

Results land where the acceptance suite looks for them, so running this
first turns the slow acceptance tests into cache reads:

    python scripts/desk_experiments.py            # runs/acceptance
    python scripts/desk_experiments.py --out other_dir
"""

import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from v2vtrade.harness import desk_comparison, generalization, load_spec
from v2vtrade.harness.experiments import GEN_EPISODES

ROOT = Path(__file__).resolve().parents[1]
KEYS = ("seed", "sw_total", "p_match_open", "jains_open", "gini_open", "price_vwap", "late_reward_var")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(ROOT / "runs" / "acceptance"))
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk.yaml"))
    ap.add_argument("--gen-episodes", type=int, default=GEN_EPISODES)
    ap.add_argument("--skip-generalization", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    base = load_spec(args.config, out_dir=args.out)
    for arm, rows in desk_comparison(base).items():
        for r in rows:
            print(json.dumps({"arm": arm, **{k: r[k] for k in KEYS}}), flush=True)
        print(f"{arm}: median sw_total {np.median([r['sw_total'] for r in rows]):.2f}", flush=True)

    if not args.skip_generalization:
        gen = replace(base, n_agents=20, episodes=args.gen_episodes)
        for r in generalization(gen):
            print(json.dumps({k: r[k] for k in ("n_agents", "sw_total", "volume_total", "p_match_open", "price_vwap")}), flush=True)


if __name__ == "__main__":
    main()
