"""Run specifications and YAML configuration loading."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from ..clearing import MECHANISMS
from ..domain import SimConfig, ValuationParams
from ..learner import LearnerConfig
from ..rewards import RewardWeights

POPULATIONS = (6, 10, 15, 20, 30, 50, 75, 100)
MODES = ("train", "eval_1day", "eval_30day", "sweep", "ablate")
EVAL_STEPS = {"eval_1day": 16, "eval_30day": 480}
ABLATIONS = ("full", "no_price_prox", "no_credit", "no_global")
OUTPUT_ENV = "V2V_OUTPUT_ROOT"

# reward used when a mechanism is trained without an explicit variant
DEFAULT_VARIANT = {
    "nash": "full",
    "greedy_avg": "full",
    "double_auction": "full",
    "learning_only": "base_only",
}


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


@dataclass(frozen=True)
class RunSpec:
    mechanism: str = "nash"
    mode: str = "train"
    n_agents: int = 6
    populations: tuple[int, ...] = POPULATIONS
    seeds: tuple[int, ...] = (0, 1, 2)
    episodes: int = 300
    steps_per_episode: int = 16
    variant: str | None = None
    config_path: str | None = None
    out_dir: str | None = None
    checkpoint: str | None = None
    checkpoint_every: int = 0
    workers: int = 1
    # "submitted": base utility at submitted bids/asks; "private": at private valuations
    utility_basis: str = "submitted"
    sim: SimConfig = field(default_factory=SimConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    rewards: RewardWeights = field(default_factory=RewardWeights)

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}; choose from {sorted(MECHANISMS)}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.utility_basis not in ("submitted", "private"):
            raise ValueError("utility_basis must be 'submitted' or 'private'")
        if self.mode in EVAL_STEPS and not self.checkpoint:
            raise ValueError(f"{self.mode} needs a checkpoint")
        object.__setattr__(self, "populations", tuple(int(p) for p in self.populations))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @property
    def reward_variant(self) -> str:
        return self.variant or DEFAULT_VARIANT[self.mechanism]

    @property
    def tag(self) -> str:
        return f"{self.mechanism}-{self.reward_variant}"

    def weights(self) -> RewardWeights:
        """Reward weights with the variant's switches applied on top of any manual flags."""
        w = self.rewards
        base = {f.name: getattr(w, f.name) for f in fields(w)}
        v = RewardWeights.variant(self.reward_variant)
        for flag in ("use_price_prox", "use_credit", "use_global"):
            base[flag] = base[flag] and getattr(v, flag)
        base["base_only"] = base["base_only"] or v.base_only
        return RewardWeights(**base)

    def out_path(self) -> Path:
        return Path(self.out_dir) if self.out_dir else output_root()

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["populations"] = list(self.populations)
        d["seeds"] = list(self.seeds)
        return _lists(d)


def _lists(obj):
    if isinstance(obj, dict):
        return {k: _lists(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_lists(v) for v in obj]
    return obj


def _tuples(d: dict, cls) -> dict:
    """Coerce YAML lists back to tuples for tuple-typed dataclass fields."""
    out = dict(d)
    for f in fields(cls):
        if f.name in out and isinstance(out[f.name], list):
            out[f.name] = tuple(out[f.name])
    return out


def _check_keys(section: str, d: dict, cls) -> None:
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"unknown keys in [{section}]: {sorted(unknown)}")


def sim_from_dict(d: dict | None) -> SimConfig:
    d = dict(d or {})
    val = d.pop("valuation", None) or {}
    _check_keys("sim", d, SimConfig)
    _check_keys("sim.valuation", val, ValuationParams)
    return SimConfig(**_tuples(d, SimConfig), valuation=ValuationParams(**val))


def spec_from_dict(d: dict, **overrides) -> RunSpec:
    """Build a RunSpec from a config mapping; non-None keyword overrides win."""
    d = dict(d or {})
    run = dict(d.get("run") or {})
    _check_keys("run", run, RunSpec)
    sim = sim_from_dict(d.get("sim"))
    learner_d = d.get("learner") or {}
    _check_keys("learner", learner_d, LearnerConfig)
    rewards_d = d.get("rewards") or {}
    _check_keys("rewards", rewards_d, RewardWeights)
    kw = {**_tuples(run, RunSpec), **{k: v for k, v in overrides.items() if v is not None}}
    kw.setdefault("sim", sim)
    kw.setdefault("learner", LearnerConfig.from_dict(learner_d))
    kw.setdefault("rewards", RewardWeights(**rewards_d))
    return RunSpec(**kw)


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        with open(path) as fh:
            return yaml.safe_load(fh) or {}
    except OSError as e:
        raise OSError(f"cannot read config {path}: {e}") from e


def load_spec(path: str | Path | None = None, **overrides) -> RunSpec:
    d = load_config(path) if path else {}
    if path:
        overrides.setdefault("config_path", str(path))
    return spec_from_dict(d, **overrides)


def with_sim(spec: RunSpec, **kw) -> RunSpec:
    return replace(spec, sim=replace(spec.sim, **kw))
