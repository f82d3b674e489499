"""Training, evaluation, sweeps, ablations and their on-disk outputs.

Layout under the output directory::

    train/<mechanism>-<variant>/seed<k>/{learning_curve.csv, checkpoint.npz, meta.json}
    eval/<mechanism>-<variant>/<mode>/N<n>/seed<k>/{steps.csv, summary.csv, meta.json}
    sweep/<mechanism>-<variant>/summary.csv
    ablate/summary.csv
"""

from __future__ import annotations

import csv
import json
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .. import __version__
from ..domain import Role
from ..env import reset_fleet
from ..learner import MADDPG, OUNoise, annealed_sigma
from ..metrics import MetricsRecord, aggregate_runs, summarize_run
from .config import ABLATIONS, EVAL_STEPS, RunSpec, with_sim
from .loop import sim_step

CURVE_COLUMNS = [
    "episode", "mean_reward", "sw", "volume_kwh", "p_match", "base", "credit", "price_prox",
    "ir_penalty", "bid_mean", "ask_mean", "offer_qty_mean", "mean_agents", "sigma", "critic_loss", "actor_grad_norm", "updates",
]


# ------------------------------------------------------------------ io helpers

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in columns])
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def code_version() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
            cwd=Path(__file__).resolve().parent, timeout=5,
        )
        if rev.returncode == 0:
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_meta(path: Path, spec: RunSpec, seed: int, **extra) -> Path:
    meta = {"spec": spec.to_dict(), "seed": seed, "code_version": code_version(), **extra}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def spec_from_meta(path: str | Path) -> RunSpec:
    """Rebuild the RunSpec recorded in a run's metadata file."""
    from .config import spec_from_dict, sim_from_dict
    from ..learner import LearnerConfig
    from ..rewards import RewardWeights

    d = json.loads(Path(path).read_text())["spec"]
    sim = sim_from_dict(d.pop("sim"))
    learner = LearnerConfig.from_dict(d.pop("learner"))
    rewards = RewardWeights(**d.pop("rewards"))
    return spec_from_dict({"run": d}, sim=sim, learner=learner, rewards=rewards)


def train_dir(spec: RunSpec, seed: int) -> Path:
    return spec.out_path() / "train" / spec.tag / f"seed{seed}"


def eval_dir(spec: RunSpec, mode: str, n: int, seed: int) -> Path:
    return spec.out_path() / "eval" / spec.tag / mode / f"N{n}" / f"seed{seed}"


def _mech_seeds(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, 7])


# ------------------------------------------------------------------- training

def train_seed(spec: RunSpec, seed: int) -> Path:
    """Train one seed; returns the checkpoint path."""
    cfg = with_sim(spec, n_target=spec.n_agents).sim
    learner = MADDPG(replace(spec.learner, n_train=spec.n_agents), cfg.max_population, seed)
    noise = OUNoise(2, np.random.default_rng([seed, 1]), spec.learner.ou_theta, spec.learner.ou_sigma)
    mech_rng = _mech_seeds(seed, 2)
    weights = spec.weights()
    out = train_dir(spec, seed)
    ckpt = out / "checkpoint.npz"
    rows = []
    for ep in range(spec.episodes):
        noise.reset()
        noise.sigma = annealed_sigma(spec.learner.ou_sigma, ep, spec.episodes, spec.learner.anneal_frac)
        state = reset_fleet(cfg, np.random.default_rng([seed, 0, ep]))
        acc = {k: 0.0 for k in ("total", "base", "credit", "price_prox", "ir_penalty")}
        n_rewards = 0
        sw = vol = pm = agents = 0.0
        losses, gnorms = [], []
        bids, asks, qtys = [], [], []
        for _ in range(spec.steps_per_episode):
            updates_before = learner.updates
            agents += len(state.agents)
            o = sim_step(state, cfg, learner, spec.mechanism, int(mech_rng.integers(2**32)), weights, noise, train=True,
                         private_basis=spec.utility_basis == "private")
            for rb in o.rewards.values():
                for k in acc:
                    acc[k] += getattr(rb, k)
                n_rewards += 1
            for of in o.offers:
                if of.role is not Role.NEUTRAL:
                    qtys.append(of.quantity)
                if of.role is Role.BUYER:
                    bids.append(of.price)
                elif of.role is Role.SELLER:
                    asks.append(of.price)
            sw += o.record.sw
            vol += o.record.volume_kwh
            pm += o.record.p_match
            if learner.updates > updates_before and learner.last_stats:
                losses.append(learner.last_stats["critic_loss"])
                gnorms.append(learner.last_stats["actor_grad_norm"])
            state = o.next_state
        d = max(n_rewards, 1)
        rows.append({
            "episode": ep,
            "mean_reward": acc["total"] / d,
            "sw": sw,
            "volume_kwh": vol,
            "p_match": pm / spec.steps_per_episode,
            "base": acc["base"] / d,
            "credit": acc["credit"] / d,
            "price_prox": acc["price_prox"] / d,
            "ir_penalty": acc["ir_penalty"] / d,
            "bid_mean": _mean(bids),
            "ask_mean": _mean(asks),
            "offer_qty_mean": _mean(qtys),
            "mean_agents": agents / spec.steps_per_episode,
            "sigma": noise.sigma,
            "critic_loss": float(np.mean(losses)) if losses else float("nan"),
            "actor_grad_norm": float(np.mean(gnorms)) if gnorms else float("nan"),
            "updates": learner.updates,
        })
        if spec.checkpoint_every and (ep + 1) % spec.checkpoint_every == 0:
            learner.save(out / f"checkpoint_ep{ep + 1}.npz", _ckpt_extra(spec))
    write_csv(out / "learning_curve.csv", CURVE_COLUMNS, rows)
    learner.save(ckpt, _ckpt_extra(spec))
    write_meta(out / "meta.json", spec, seed, checkpoint=str(ckpt), optimizer=spec.learner.optimizer)
    return ckpt


def _mean(x) -> float:
    return float(np.mean(x)) if len(x) else float("nan")


def _ckpt_extra(spec: RunSpec) -> dict:
    return {"mechanism": spec.mechanism, "variant": spec.reward_variant, "n_train": spec.n_agents}


def _pool_map(fn, args: list[tuple], workers: int) -> list:
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*args)))


def run_training(spec: RunSpec) -> list[Path]:
    """Train every seed in ``spec.seeds``; returns checkpoint paths in seed order."""
    return _pool_map(train_seed, [(spec, s) for s in spec.seeds], spec.workers)


# ----------------------------------------------------------------- evaluation

def resolve_checkpoint(template: str | Path, seed: int) -> Path:
    p = Path(str(template).format(seed=seed))
    if p.is_dir():
        p = p / "checkpoint.npz"
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return p


def evaluate(spec: RunSpec, checkpoint: str | Path, n: int, seed: int, mode: str) -> tuple[list[MetricsRecord], dict]:
    """Noise-free decentralized rollout. The fleet is reset once, never mid-run."""
    if mode not in EVAL_STEPS:
        raise ValueError(f"unknown evaluation mode {mode!r}")
    learner = MADDPG.load(checkpoint)
    cfg = with_sim(spec, n_target=n).sim
    state = reset_fleet(cfg, np.random.default_rng([seed, 100, n]))
    mech_rng = _mech_seeds(seed, 101)
    records = []
    for _ in range(EVAL_STEPS[mode]):
        o = sim_step(state, cfg, learner, spec.mechanism, int(mech_rng.integers(2**32)))
        records.append(o.record)
        state = o.next_state
    return records, summarize_run(records)


def eval_one(spec: RunSpec, n: int, seed: int, mode: str) -> dict:
    ckpt = resolve_checkpoint(spec.checkpoint, seed)
    records, summary = evaluate(spec, ckpt, n, seed, mode)
    out = eval_dir(spec, mode, n, seed)
    write_csv(out / "steps.csv", MetricsRecord.columns(), (r.as_row() for r in records))
    row = {"mechanism": spec.mechanism, "variant": spec.reward_variant, "mode": mode, "n_agents": n, "seed": seed, **summary}
    write_csv(out / "summary.csv", list(row), [row])
    write_meta(out / "meta.json", spec, seed, checkpoint=str(ckpt), n_agents=n, mode=mode)
    return row


def run_evaluation(spec: RunSpec, populations: Sequence[int] | None = None) -> list[dict]:
    """Evaluate ``spec.checkpoint`` (may contain ``{seed}``) for each seed and population."""
    mode = spec.mode if spec.mode in EVAL_STEPS else "eval_30day"
    pops = populations or (spec.n_agents,)
    args = [(spec, n, s, mode) for n in pops for s in spec.seeds]
    return _pool_map(eval_one, args, spec.workers)


SWEEP_KEYS = (
    "sw_total", "sw_private_total", "volume_total", "jains_median", "gini_median", "p_match_median",
    "jains_open", "gini_open", "p_match_open", "price_vwap",
)


def sweep(spec: RunSpec) -> Path:
    """30-day evaluation over every population and seed; one summary row per pair plus aggregates."""
    rows = run_evaluation(replace(spec, mode="eval_30day", checkpoint=spec.checkpoint), spec.populations)
    out = spec.out_path() / "sweep" / spec.tag
    write_csv(out / "summary.csv", list(rows[0]), rows)
    agg = aggregate_runs(rows, SWEEP_KEYS)
    write_csv(out / "aggregate.csv", list(agg), [agg])
    return out / "summary.csv"


def late_variance(curve: Sequence[float], frac: float = 0.25) -> float:
    """Sample variance of per-episode mean reward over the final ``frac`` of training."""
    x = np.asarray(curve, dtype=float)
    k = max(2, int(math.ceil(frac * x.size)))
    return float(np.var(x[-k:], ddof=1)) if x.size >= 2 else 0.0


def ablate(spec: RunSpec, variants: Sequence[str] = ABLATIONS) -> Path:
    """Train and 30-day evaluate each reward variant with the Nash mechanism."""
    rows = []
    for v in variants:
        vs = replace(spec, mechanism="nash", variant=v, mode="train")
        ckpts = run_training(vs)
        for seed, ck in zip(vs.seeds, ckpts):
            curve = [float(r["mean_reward"]) for r in read_csv(ck.parent / "learning_curve.csv")]
            ev = eval_one(replace(vs, mode="eval_30day", checkpoint=str(ck)), spec.n_agents, seed, "eval_30day")
            rows.append({**ev, "late_reward_var": late_variance(curve), "final_reward": float(np.mean(curve[-max(1, len(curve) // 4):]))})
    out = spec.out_path() / "ablate" / "summary.csv"
    write_csv(out, list(rows[0]), rows)
    return out


# ------------------------------------------------------------------ plot data

def _band(series: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = min(len(s) for s in series)
    m = np.vstack([s[:n] for s in series])
    return np.percentile(m, 50, axis=0), np.percentile(m, 25, axis=0), np.percentile(m, 75, axis=0)


def emit_plot_data(csv_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Learning-curve bands and intra-day volume series as plain CSV."""
    root = Path(csv_dir)
    out = Path(out_dir) if out_dir else root / "plots"
    curves = sorted(root.glob("train/*/seed*/learning_curve.csv"))
    steps = sorted(root.glob("eval/*/*/N*/seed*/steps.csv"))
    if not curves and not steps:
        raise FileNotFoundError(f"no learning curves or evaluation steps under {root}")
    written = []

    groups: dict[str, list[np.ndarray]] = {}
    for c in curves:
        tag = c.parent.parent.name
        groups.setdefault(tag, []).append(np.array([float(r["mean_reward"]) for r in read_csv(c)]))
    for tag, series in groups.items():
        med, lo, hi = _band(series)
        rows = [{"episode": i, "median": float(med[i]), "q25": float(lo[i]), "q75": float(hi[i]), "n_runs": len(series)}
                for i in range(med.size)]
        written.append(write_csv(out / f"learning_curve_{tag}.csv", ["episode", "median", "q25", "q75", "n_runs"], rows))

    vgroups: dict[str, list[np.ndarray]] = {}
    for s in steps:
        tag = s.parents[3].name
        rs = read_csv(s)
        vol = np.array([float(r["volume_kwh"]) for r in rs])
        per_day = vol[: (vol.size // 16) * 16].reshape(-1, 16).mean(axis=0) if vol.size >= 16 else vol
        vgroups.setdefault(tag, []).append(per_day)
    for tag, series in vgroups.items():
        med, lo, hi = _band(series)
        rows = [{"step": i, "volume_median": float(med[i]), "q25": float(lo[i]), "q75": float(hi[i]), "n_runs": len(series)}
                for i in range(med.size)]
        written.append(write_csv(out / f"intraday_volume_{tag}.csv", ["step", "volume_median", "q25", "q75", "n_runs"], rows))
    return written
