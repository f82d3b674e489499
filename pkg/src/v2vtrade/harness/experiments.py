"""Desk-scale experiment drivers shared by the acceptance suite and scripts/.

Every driver is resumable: a seed whose checkpoint or summary already exists
under the output directory is read back instead of recomputed. Runs are
deterministic in (spec, seed), so a cached result equals a fresh one.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

from .config import RunSpec
from .runs import eval_dir, eval_one, late_variance, read_csv, train_dir, train_seed

log = logging.getLogger(__name__)

DESK_ARMS = (("nash", None), ("double_auction", None), ("nash", "no_price_prox"))
# training length of the N=20 checkpoint used for the population smoke test
GEN_EPISODES = 20
GEN_POPULATIONS = (6, 50, 100)


def _fnum(v: str):
    try:
        return int(v)
    except ValueError:
        try:
            return float(v)
        except ValueError:
            return v


def trained(spec: RunSpec, seed: int) -> Path:
    ck = train_dir(spec, seed) / "checkpoint.npz"
    if ck.exists() and (ck.parent / "learning_curve.csv").exists():
        return ck
    log.info("training %s seed %d", spec.tag, seed)
    return train_seed(spec, seed)


def evaluated(spec: RunSpec, ckpt: Path, n: int, seed: int, mode: str = "eval_30day") -> dict:
    summ = eval_dir(spec, mode, n, seed) / "summary.csv"
    if summ.exists():
        return {k: _fnum(v) for k, v in read_csv(summ)[0].items()}
    log.info("evaluating %s N=%d seed %d", spec.tag, n, seed)
    return eval_one(replace(spec, mode=mode, checkpoint=str(ckpt)), n, seed, mode)


def desk_arm(base: RunSpec, mechanism: str, variant: str | None) -> list[dict]:
    """Train every seed of one arm, then 30-day evaluate at the training population."""
    spec = replace(base, mechanism=mechanism, variant=variant, mode="train")
    rows = []
    for seed in spec.seeds:
        ck = trained(spec, seed)
        curve = [float(r["mean_reward"]) for r in read_csv(ck.parent / "learning_curve.csv")]
        row = evaluated(spec, ck, spec.n_agents, seed)
        rows.append({**row, "late_reward_var": late_variance(curve)})
    return rows


def desk_comparison(base: RunSpec) -> dict[str, list[dict]]:
    """The three desk arms: Nash, Double Auction and Nash without price proximity."""
    return {f"{m}-{v or 'full'}": desk_arm(base, m, v) for m, v in DESK_ARMS}


def generalization(base: RunSpec, populations=GEN_POPULATIONS, seed: int = 0) -> list[dict]:
    """Train once at ``base.n_agents`` and evaluate the same actor at other sizes."""
    # own subtree: the train layout is keyed by tag and seed, not population
    spec = replace(base, mode="train", seeds=(seed,), out_dir=str(base.out_path() / f"generalize_N{base.n_agents}"))
    ck = trained(spec, seed)
    return [evaluated(spec, ck, n, seed) for n in populations]
