"""Command-line entry point: ``v2vtrade {train,eval,sweep,ablate,plot-data}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import ABLATIONS, POPULATIONS, emit_plot_data, load_spec
from .harness import ablate as run_ablate
from .harness import run_evaluation, run_training
from .harness import sweep as run_sweep

log = logging.getLogger("v2vtrade")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file with run/sim/learner/rewards sections")
    p.add_argument("--mechanism", choices=["nash", "greedy_avg", "double_auction", "learning_only"])
    p.add_argument("--agents", type=int, help="training or evaluation population")
    p.add_argument("--seeds", type=_ints, help="comma-separated seeds, e.g. 0,1,2")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", help="output root (default $V2V_OUTPUT_ROOT or ./runs)")
    p.add_argument("--workers", type=int)
    p.add_argument("--variant", choices=sorted({*ABLATIONS, "base_only"}))
    p.add_argument("--no-price-prox", action="store_true")
    p.add_argument("--no-credit", action="store_true")
    p.add_argument("--no-global", action="store_true")
    p.add_argument("--utility-basis", choices=["submitted", "private"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="v2vtrade", description="V2V energy trading simulator and learner")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    t = sub.add_parser("train", help="train one checkpoint per seed")
    _common(t)
    t.add_argument("--checkpoint-every", type=int)

    e = sub.add_parser("eval", help="evaluate a checkpoint (path may contain {seed})")
    _common(e)
    e.add_argument("--mode", choices=["eval_1day", "eval_30day"], default="eval_30day")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--populations", type=_ints, help="evaluate at several populations")

    s = sub.add_parser("sweep", help="30-day evaluation across populations")
    _common(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--populations", type=_ints, default=POPULATIONS)

    a = sub.add_parser("ablate", help="train and evaluate reward ablations under Nash clearing")
    _common(a)
    a.add_argument("--variants", default=",".join(ABLATIONS))

    pd = sub.add_parser("plot-data", help="emit plot-ready CSVs from a results directory")
    pd.add_argument("results", help="directory holding train/ and eval/ outputs")
    pd.add_argument("--out", help="destination (default <results>/plots)")
    return ap


def _overrides(args: argparse.Namespace) -> dict:
    o = {}
    for attr, key in (("mechanism", "mechanism"), ("agents", "n_agents"), ("seeds", "seeds"),
                      ("episodes", "episodes"), ("out", "out_dir"), ("workers", "workers"),
                      ("variant", "variant"), ("utility_basis", "utility_basis"),
                      ("checkpoint_every", "checkpoint_every"), ("checkpoint", "checkpoint"),
                      ("populations", "populations")):
        v = getattr(args, attr, None)
        if v is not None:
            o[key] = v
    return o


def _with_flags(spec, args):
    from dataclasses import replace

    off = {}
    if args.no_price_prox:
        off["use_price_prox"] = False
    if args.no_credit:
        off["use_credit"] = False
    if args.no_global:
        off["use_global"] = False
    return replace(spec, rewards=replace(spec.rewards, **off)) if off else spec


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.verb == "plot-data":
        for p in emit_plot_data(args.results, args.out):
            print(p)
        return 0

    mode = {"train": "train", "eval": getattr(args, "mode", None), "sweep": "sweep", "ablate": "ablate"}[args.verb]
    spec = _with_flags(load_spec(args.config, mode=mode, **_overrides(args)), args)

    if args.verb == "train":
        for p in run_training(spec):
            print(p)
    elif args.verb == "eval":
        rows = run_evaluation(spec, args.populations)
        for r in rows:
            print(json.dumps({k: r[k] for k in ("mechanism", "n_agents", "seed", "sw_total", "p_match_open", "price_vwap")}))
    elif args.verb == "sweep":
        print(run_sweep(spec))
    elif args.verb == "ablate":
        print(run_ablate(spec, tuple(v for v in args.variants.split(",") if v)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
