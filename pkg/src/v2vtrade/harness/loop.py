"""Per-step simulation shared by training and evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..clearing import ClearingResult, get_mechanism
from ..domain import Offer, Role, SimConfig, classify_role, trade_cap
from ..env import OBS_DIM, FleetState, apply_trades, observe, private_value, step_arrivals_departures
from ..learner import MADDPG, OUNoise, act, pad_slots, to_offer_terms
from ..metrics import MetricsRecord, step_metrics
from ..rewards import RewardBreakdown, RewardWeights, step_rewards


@dataclass
class StepOutcome:
    result: ClearingResult
    record: MetricsRecord
    rewards: dict[int, RewardBreakdown] = field(default_factory=dict)
    next_state: FleetState | None = None
    offers: list[Offer] = field(default_factory=list)


def observations(state: FleetState, cfg: SimConfig):
    agents = sorted(state.agents, key=lambda a: a.id)
    obs = np.zeros((len(agents), OBS_DIM))
    for k, a in enumerate(agents):
        obs[k] = observe(a, state.step, cfg).to_array()
    return agents, obs


def make_offers(agents, frac: np.ndarray, cfg: SimConfig) -> list[Offer]:
    caps = np.array([trade_cap(a, cfg) for a in agents])
    price, qty = to_offer_terms(frac, caps, cfg.price_min, cfg.price_max)
    offers = []
    for a, p, q in zip(agents, price, qty):
        role = classify_role(a)
        offers.append(Offer(a.id, role, float(p), 0.0 if role is Role.NEUTRAL else float(q)))
    return offers


def sim_step(
    state: FleetState,
    cfg: SimConfig,
    learner: MADDPG,
    mechanism: str,
    mech_seed: int,
    weights: RewardWeights | None = None,
    noise: OUNoise | None = None,
    train: bool = False,
    private_basis: bool = False,
) -> StepOutcome:
    """Act, clear, score, move energy, then turn over the fleet.

    With ``train`` the transition of every agent goes into the learner's buffer
    and one update runs. Rewards (and their counterfactual re-clearing) are only
    computed when ``weights`` is given. ``private_basis`` scores base utility
    against private valuations instead of submitted prices.
    """
    mech = get_mechanism(mechanism)
    agents, obs = observations(state, cfg)
    noise_rows = None
    if noise is not None and agents:
        noise_rows = np.array([noise.sample(a.id) for a in agents])
    frac = act(learner.actor, obs, noise_rows) if agents else np.zeros((0, 2))
    offers = make_offers(agents, frac, cfg)
    fleet = {a.id: a for a in agents}

    rewards: dict[int, RewardBreakdown] = {}
    values = {a.id: private_value(a, state.step, cfg) for a in agents}
    if weights is not None and offers:
        result, rewards = step_rewards(offers, fleet, cfg, weights, mech, values if private_basis else None, seed=mech_seed)
    else:
        result = mech(offers, fleet, cfg, mech_seed)
    record = step_metrics(state.step, result, offers, agents, values)

    nxt = apply_trades(state, result, cfg)
    nxt = step_arrivals_departures(nxt, cfg)

    if train and agents:
        _store(learner, agents, obs, frac, rewards, nxt, cfg)
        learner.update()
    if noise is not None:
        noise.forget(a.id for a in nxt.agents)
    return StepOutcome(result, record, rewards, nxt, offers)


def _store(learner: MADDPG, agents, obs, frac, rewards, nxt: FleetState, cfg: SimConfig) -> None:
    S = learner.n_slots
    o, a, present = pad_slots(obs, frac, S)
    next_agents, next_obs = observations(nxt, cfg)
    next_slot = {ag.id: k for k, ag in enumerate(next_agents)}
    if next_agents:
        # the next-step policy actions are recomputed from target nets at update time
        no, _, npresent = pad_slots(next_obs, np.zeros((len(next_agents), 2)), S)
    else:
        no, npresent = np.zeros((S, OBS_DIM)), np.zeros(S)
    for k, ag in enumerate(agents):
        j = next_slot.get(ag.id, -1)
        learner.buffer.add(
            obs=o, act=a, present=present, ego=k,
            reward=rewards[ag.id].total if ag.id in rewards else 0.0,
            next_obs=no, next_present=npresent, next_ego=j,
            done=float(j < 0),
        )
