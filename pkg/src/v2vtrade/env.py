"""Discrete-time parking-lot fleet: arrivals, departures, valuations, observations."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .domain import EPS, EVAgent, Role, SimConfig, avail, classify_role, deficit

if TYPE_CHECKING:
    from .clearing import ClearingResult

OBS_DIM = 9


class InfeasibleResult(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    battery: float
    deficit: float
    avail: float
    urgency: float
    remaining: float
    last_price: float
    role_onehot: tuple[float, float, float]

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.battery, self.deficit, self.avail, self.urgency, self.remaining, self.last_price, *self.role_onehot]
        )


@dataclass(frozen=True)
class FleetState:
    """Parked agents at ``step``. The generator is shared, not copied, between successive states."""

    step: int
    agents: tuple[EVAgent, ...]
    rng: np.random.Generator
    next_id: int = 0

    def by_id(self) -> dict[int, EVAgent]:
        return {a.id: a for a in self.agents}

    def __len__(self):
        return len(self.agents)


def sample_agent(rng: np.random.Generator, cfg: SimConfig, agent_id: int, entry_step: int, duration: int | None = None) -> EVAgent:
    cap = cfg.capacity_kwh
    if duration is None:
        duration = int(rng.integers(cfg.duration_range[0], cfg.duration_range[1] + 1))
    soc0 = rng.uniform(*cfg.soc0_range)
    need = rng.uniform(*cfg.need_range)
    return EVAgent(
        id=agent_id,
        battery_kwh=soc0 * cap,
        capacity_kwh=cap,
        need_kwh=need * cap,
        buffer_kwh=cfg.buffer_frac * cap,
        max_power_kw=cfg.max_power_kw,
        entry_step=entry_step,
        duration_steps=duration,
        base_urgency=float(rng.uniform(*cfg.base_urgency_range)),
        rho=float(rng.uniform(0.0, 1.0)),
    )


def reset_fleet(cfg: SimConfig, seed: int | np.random.Generator | None) -> FleetState:
    """Start with ``n_target`` agents already parked for a random part of their stay."""
    rng = np.random.default_rng(seed)
    agents = []
    for k in range(cfg.n_target):
        duration = int(rng.integers(cfg.duration_range[0], cfg.duration_range[1] + 1))
        elapsed = int(rng.integers(0, duration))
        agents.append(sample_agent(rng, cfg, k, -elapsed, duration))
    return FleetState(0, tuple(agents), rng, cfg.n_target)


def step_arrivals_departures(state: FleetState, cfg: SimConfig, rate: float | None = None) -> FleetState:
    """Drop agents whose stay has ended, then add Poisson(rate) arrivals at ``state.step``."""
    lam = cfg.arrival_rate if rate is None else rate
    staying = [a for a in state.agents if a.departure_step() > state.step]
    n_new = int(state.rng.poisson(lam)) if lam > 0 else 0
    n_new = max(0, min(n_new, cfg.max_population - len(staying)))
    nid = state.next_id
    for _ in range(n_new):
        staying.append(sample_agent(state.rng, cfg, nid, state.step))
        nid += 1
    return FleetState(state.step, tuple(staying), state.rng, nid)


def urgency(agent: EVAgent, step: int, cfg: SimConfig) -> float:
    frac_left = agent.remaining_steps(step) / agent.duration_steps
    return agent.base_urgency + cfg.valuation.lambda_time * (1.0 - frac_left)


def buyer_valuation(agent: EVAgent, step: int, cfg: SimConfig) -> float:
    vp = cfg.valuation
    v = (
        vp.v_base_buy
        + vp.beta_urgency * urgency(agent, step, cfg)
        + vp.gamma_opportunity * deficit(agent) / agent.capacity_kwh
    )
    return cfg.clamp_price(v)


def seller_cost(agent: EVAgent, step: int, cfg: SimConfig) -> float:
    vp = cfg.valuation
    c = vp.c_base_sell - vp.v_battery * avail(agent) / agent.capacity_kwh + vp.c_grid * agent.rho + vp.delta_degrad
    return cfg.clamp_price(c)


def private_value(agent: EVAgent, step: int, cfg: SimConfig) -> float:
    """Willingness to pay for buyers, minimum acceptable price for sellers, 0 for neutrals."""
    role = classify_role(agent)
    if role is Role.BUYER:
        return buyer_valuation(agent, step, cfg)
    if role is Role.SELLER:
        return seller_cost(agent, step, cfg)
    return 0.0


def observe(agent: EVAgent, step: int, cfg: SimConfig) -> Observation:
    cap = agent.capacity_kwh
    onehot = [0.0, 0.0, 0.0]
    onehot[int(classify_role(agent))] = 1.0
    u_max = agent.base_urgency + cfg.valuation.lambda_time
    return Observation(
        battery=agent.battery_kwh / cap,
        deficit=deficit(agent) / cap,
        avail=avail(agent) / cap,
        urgency=min(1.0, urgency(agent, step, cfg) / u_max) if u_max > 0 else 0.0,
        remaining=agent.remaining_steps(step) / agent.duration_steps,
        last_price=agent.last_price / cfg.price_max,
        role_onehot=tuple(onehot),
    )


def apply_trades(state: FleetState, result: "ClearingResult", cfg: SimConfig) -> FleetState:
    """Move energy along executed trades and advance the clock by one step."""
    delta: dict[int, float] = {}
    volume: dict[int, float] = {}
    spend: dict[int, float] = {}
    for t in result.trades:
        delta[t.buyer_id] = delta.get(t.buyer_id, 0.0) + cfg.eta * t.quantity
        delta[t.seller_id] = delta.get(t.seller_id, 0.0) - t.quantity
        for aid in (t.buyer_id, t.seller_id):
            volume[aid] = volume.get(aid, 0.0) + t.quantity
            spend[aid] = spend.get(aid, 0.0) + t.quantity * t.price

    agents = []
    for a in state.agents:
        if a.id not in delta:
            agents.append(a)
            continue
        b = a.battery_kwh + delta[a.id]
        if b < -EPS or b > a.capacity_kwh + EPS:
            raise InfeasibleResult(f"agent {a.id}: battery would reach {b:.6f} kWh (capacity {a.capacity_kwh})")
        b = min(max(b, 0.0), a.capacity_kwh)
        agents.append(replace(a, battery_kwh=b, last_price=spend[a.id] / volume[a.id]))
    missing = set(delta) - {a.id for a in state.agents}
    if missing:
        raise InfeasibleResult(f"trades reference agents not in the fleet: {sorted(missing)}")
    return FleetState(state.step + 1, tuple(agents), state.rng, state.next_id)


def role_counts(agents) -> dict[Role, int]:
    counts = {r: 0 for r in Role}
    for a in agents:
        counts[classify_role(a)] += 1
    return counts
