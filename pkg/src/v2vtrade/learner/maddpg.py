"""Shared-parameter MADDPG: one actor for every agent, one joint-input critic."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..env import OBS_DIM
from .nets import MLP, Adam
from .replay import ReplayBuffer

ACT_DIM = 2
# per-slot critic features: observation, normalized action, absent flag, ego flag
SLOT_DIM = OBS_DIM + ACT_DIM + 2
# the critic input starts with the scored agent's own observation and action
EGO_DIM = OBS_DIM + ACT_DIM
NEUTRAL_COL = OBS_DIM - 1
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = 0.95
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch: int = 256
    tau: float = 0.01
    episodes: int = 2000
    n_train: int = 20
    seeds: int = 3
    hidden: tuple[int, ...] = (128, 128)
    warmup: int = 1000
    buffer_capacity: int = 100_000
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    anneal_frac: float = 0.5
    optimizer: str = "adam"

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.optimizer != "adam":
            raise ValueError("only the adam optimizer is implemented")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


# ---------------------------------------------------------------- action maps

def squash(raw: np.ndarray) -> np.ndarray:
    """Raw actor output -> (price fraction, quantity fraction), both in [0, 1]."""
    out = np.empty_like(raw)
    out[..., 0] = 0.5 * (np.tanh(raw[..., 0]) + 1.0)
    out[..., 1] = 1.0 / (1.0 + np.exp(-raw[..., 1]))
    return out


def squash_grad(raw: np.ndarray) -> np.ndarray:
    g = np.empty_like(raw)
    g[..., 0] = 0.5 * (1.0 - np.tanh(raw[..., 0]) ** 2)
    s = 1.0 / (1.0 + np.exp(-raw[..., 1]))
    g[..., 1] = s * (1.0 - s)
    return g


def role_mask(obs: np.ndarray) -> np.ndarray:
    """Per-dimension action mask: neutral agents keep a price but never a quantity."""
    m = np.ones(obs.shape[:-1] + (ACT_DIM,))
    m[..., 1] = 1.0 - obs[..., NEUTRAL_COL]
    return m


def policy(actor: MLP, obs: np.ndarray) -> np.ndarray:
    """Deterministic normalized action for a batch of observations."""
    return squash(actor(obs)) * role_mask(obs)


def act(actor: MLP, obs: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
    """Normalized action in [0, 1]^2, noise added before clipping, role mask after."""
    frac = squash(actor(obs))
    if noise is not None:
        frac = np.clip(frac + noise, 0.0, 1.0)
    return frac * role_mask(obs)


def to_offer_terms(frac: np.ndarray, caps: np.ndarray, price_min: float, price_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Map normalized actions onto prices in the band and quantities in [0, cap]."""
    price = price_min + frac[..., 0] * (price_max - price_min)
    qty = frac[..., 1] * caps
    return price, qty


# ------------------------------------------------------------ joint critic input

def pad_slots(obs_list: Sequence[np.ndarray], act_list: Sequence[np.ndarray], n_slots: int):
    """Stack per-agent rows into fixed slot arrays (obs, act, present), padding last."""
    n = len(obs_list)
    if n < 1:
        raise ValueError("need at least one agent")
    if n > n_slots:
        raise ValueError(f"{n} agents exceed the critic's {n_slots} slots; the critic is training-only")
    obs = np.zeros((n_slots, OBS_DIM))
    acts = np.zeros((n_slots, ACT_DIM))
    present = np.zeros(n_slots)
    if n:
        obs[:n] = np.asarray(obs_list)
        acts[:n] = np.asarray(act_list)
        present[:n] = 1.0
    return obs, acts, present


def critic_width(n_slots: int) -> int:
    return EGO_DIM + n_slots * SLOT_DIM


def joint_input(obs: np.ndarray, acts: np.ndarray, present: np.ndarray, ego: np.ndarray) -> np.ndarray:
    """Batched critic input of shape (B, EGO_DIM + n_slots * SLOT_DIM).

    The leading block repeats the scored agent's observation and action; the
    slots that follow hold every agent in id order with padding last.
    """
    B, S = present.shape
    rows = np.arange(B)
    x = np.zeros((B, S, SLOT_DIM))
    p = present[..., None]
    x[..., :OBS_DIM] = obs * p
    x[..., OBS_DIM:OBS_DIM + ACT_DIM] = acts * p
    x[..., OBS_DIM + ACT_DIM] = 1.0 - present
    x[rows, ego, -1] = 1.0
    head = np.concatenate([obs[rows, ego], acts[rows, ego]], axis=1)
    return np.concatenate([head, x.reshape(B, S * SLOT_DIM)], axis=1)


def pad_joint(obs_list, act_list, n_train: int, ego: int = 0) -> np.ndarray:
    """Single critic input vector for agents listed in slot order."""
    obs, acts, present = pad_slots(obs_list, act_list, n_train)
    return joint_input(obs[None], acts[None], present[None], np.array([ego]))[0]


# ------------------------------------------------------------------- updates

def critic_loss_grad(critic: MLP, target_actor: MLP, target_critic: MLP, batch: dict, gamma: float):
    """Mean squared TD error and its gradient with respect to critic parameters."""
    B = batch["reward"].shape[0]
    next_act = policy(target_actor, batch["next_obs"]) * batch["next_present"][..., None]
    ego_next = np.clip(batch["next_ego"], 0, None)
    q_next = target_critic(joint_input(batch["next_obs"], next_act, batch["next_present"], ego_next))[:, 0]
    y = batch["reward"] + gamma * (1.0 - batch["done"]) * q_next
    q, cache = critic.forward(joint_input(batch["obs"], batch["act"], batch["present"], batch["ego"]))
    err = q[:, 0] - y
    loss = float(np.mean(err**2))
    grads, _ = critic.backward(cache, (2.0 / B) * err[:, None])
    return loss, grads


def actor_objective_grad(actor: MLP, critic: MLP, batch: dict):
    """Batch-mean Q with each sample's ego action replaced by the current policy.

    Returns the objective and its gradient with respect to actor parameters.
    Other agents' replayed actions are held fixed.
    """
    obs, present, ego = batch["obs"], batch["present"], batch["ego"]
    B = obs.shape[0]
    rows = np.arange(B)
    ego_obs = obs[rows, ego]
    raw, a_cache = actor.forward(ego_obs)
    mask = role_mask(ego_obs)
    frac = squash(raw) * mask
    acts = batch["act"].copy()
    acts[rows, ego] = frac
    q, c_cache = critic.forward(joint_input(obs, acts, present, ego))
    _, dx = critic.backward(c_cache, np.full((B, 1), 1.0 / B))
    # own action enters twice: the leading block and its id-ordered slot
    d_slot = dx[:, EGO_DIM:].reshape(B, -1, SLOT_DIM)[rows, ego, OBS_DIM:OBS_DIM + ACT_DIM]
    dx = dx[:, OBS_DIM:EGO_DIM] + d_slot
    draw = dx * mask * squash_grad(raw)
    grads, _ = actor.backward(a_cache, draw)
    return float(q.mean()), grads


def soft_update(target: MLP, online: MLP, tau: float) -> None:
    if len(target.params) != len(online.params) or any(t.shape != o.shape for t, o in zip(target.params, online.params)):
        raise ValueError("target and online networks differ in shape")
    for t, o in zip(target.params, online.params):
        t *= 1.0 - tau
        t += tau * o


def _norm(grads) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads)))


class MADDPG:
    """Online and target copies of the shared actor and critic plus their optimizers."""

    def __init__(self, cfg: LearnerConfig, n_slots: int, seed: int | None = 0):
        self.cfg = cfg
        self.n_slots = int(n_slots)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.actor = MLP((OBS_DIM, *cfg.hidden, ACT_DIM), self.rng)
        self.critic = MLP((critic_width(self.n_slots), *cfg.hidden, 1), self.rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, cfg.actor_lr)
        self.critic_opt = Adam(self.critic.params, cfg.critic_lr)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.updates = 0
        self.last_stats: dict[str, float] | None = None

    def critic_update(self, batch: dict) -> float:
        loss, grads = critic_loss_grad(self.critic, self.target_actor, self.target_critic, batch, self.cfg.gamma)
        self.critic_opt.step(self.critic.params, grads)
        return loss

    def actor_update(self, batch: dict) -> float:
        _, grads = actor_objective_grad(self.actor, self.critic, batch)
        # ascent on Q is descent on -Q
        self.actor_opt.step(self.actor.params, [-g for g in grads])
        return _norm(grads)

    def update(self) -> dict[str, float] | None:
        """One critic step, one actor step, soft target tracking. None during warm-up."""
        if len(self.buffer) < max(self.cfg.warmup, 1):
            return None
        batch = self.buffer.sample(self.cfg.batch, self.rng)
        loss = self.critic_update(batch)
        gnorm = self.actor_update(batch)
        soft_update(self.target_actor, self.actor, self.cfg.tau)
        soft_update(self.target_critic, self.critic, self.cfg.tau)
        self.updates += 1
        self.last_stats = {"critic_loss": loss, "actor_grad_norm": gnorm}
        return self.last_stats

    # --------------------------------------------------------- persistence

    def save(self, path: str | Path, extra: dict | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {}
        for name in ("actor", "critic", "target_actor", "target_critic"):
            for k, p in enumerate(getattr(self, name).params):
                arrays[f"{name}/{k}"] = p
        meta = {
            "version": CHECKPOINT_VERSION,
            "learner": asdict(self.cfg),
            "n_slots": self.n_slots,
            "seed": self.seed,
            "obs_dim": OBS_DIM,
            "act_dim": ACT_DIM,
            "updates": self.updates,
            "extra": extra or {},
        }
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "MADDPG":
        with np.load(Path(path), allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            if meta["obs_dim"] != OBS_DIM or meta["act_dim"] != ACT_DIM:
                raise ValueError("checkpoint observation/action layout does not match this build")
            agent = cls(LearnerConfig.from_dict(meta["learner"]), meta["n_slots"], meta["seed"])
            for name in ("actor", "critic", "target_actor", "target_critic"):
                net = getattr(agent, name)
                for k, p in enumerate(net.params):
                    stored = z[f"{name}/{k}"]
                    if stored.shape != p.shape:
                        raise ValueError(f"{name} layer {k}: shape {stored.shape} != {p.shape}")
                    p[...] = stored
        agent.updates = meta.get("updates", 0)
        agent.meta = meta
        return agent
