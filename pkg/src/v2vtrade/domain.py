"""Core value types shared by the simulator, market mechanisms and learner.

Energies are in kWh, prices in currency/kWh. All types are frozen dataclasses;
state changes go through ``dataclasses.replace``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields

EPS = 1e-9


class Role(enum.IntEnum):
    BUYER = 0
    SELLER = 1
    NEUTRAL = 2


@dataclass(frozen=True)
class EVAgent:
    id: int
    battery_kwh: float
    capacity_kwh: float
    need_kwh: float
    buffer_kwh: float
    max_power_kw: float
    entry_step: int
    duration_steps: int
    base_urgency: float
    rho: float
    last_price: float = 0.0

    def __post_init__(self):
        if not (-EPS <= self.battery_kwh <= self.capacity_kwh + EPS):
            raise ValueError(f"agent {self.id}: battery {self.battery_kwh} outside [0, {self.capacity_kwh}]")
        if not (0.0 < self.need_kwh <= self.capacity_kwh):
            raise ValueError(f"agent {self.id}: need {self.need_kwh} outside (0, capacity]")
        if self.buffer_kwh < 0 or self.duration_steps < 1:
            raise ValueError(f"agent {self.id}: negative buffer or empty stay")

    def departure_step(self) -> int:
        return self.entry_step + self.duration_steps

    def remaining_steps(self, step: int) -> int:
        return self.departure_step() - step


@dataclass(frozen=True)
class ValuationParams:
    """Private valuation coefficients. Defaults keep valuations inside the 0.05-0.50 band."""

    v_base_buy: float = 0.20
    beta_urgency: float = 0.10
    gamma_opportunity: float = 0.15
    c_base_sell: float = 0.12
    v_battery: float = 0.05
    c_grid: float = 0.28
    delta_degrad: float = 0.02
    lambda_time: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be nonnegative")


@dataclass(frozen=True)
class SimConfig:
    dt_hours: float = 0.5
    eta: float = 0.95
    price_min: float = 0.05
    price_max: float = 0.50
    grid_price: float = 0.28
    n_target: int = 6
    duration_range: tuple[int, int] = (4, 12)
    soc0_range: tuple[float, float] = (0.2, 0.9)
    need_range: tuple[float, float] = (0.5, 0.95)
    base_urgency_range: tuple[float, float] = (0.1, 0.3)
    capacity_kwh: float = 75.0
    max_power_kw: float = 11.0
    buffer_frac: float = 0.05
    steps_per_day: int = 16
    # arrivals are dropped once the fleet reaches max_population_factor * n_target
    max_population_factor: int = 2
    valuation: ValuationParams = ValuationParams()

    def __post_init__(self):
        if not self.price_min < self.price_max:
            raise ValueError("price_min must be below price_max")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.n_target < 1:
            raise ValueError("n_target must be positive")

    @property
    def arrival_rate(self) -> float:
        return self.n_target / 8.0

    @property
    def max_population(self) -> int:
        return self.max_population_factor * self.n_target

    @property
    def step_energy_kwh(self) -> float:
        return self.max_power_kw * self.dt_hours

    def clamp_price(self, p: float) -> float:
        return min(max(p, self.price_min), self.price_max)


@dataclass(frozen=True)
class Offer:
    agent_id: int
    role: Role
    price: float
    quantity: float

    def __post_init__(self):
        if self.quantity < 0:
            raise ValueError(f"offer from {self.agent_id}: negative quantity")
        if self.role is Role.NEUTRAL and self.quantity != 0.0:
            raise ValueError(f"offer from {self.agent_id}: neutral agents cannot trade")


def classify_role(agent: EVAgent) -> Role:
    # strict inequalities: the boundary band resolves to neutral
    if agent.battery_kwh < agent.need_kwh - EPS:
        return Role.BUYER
    if agent.battery_kwh > agent.need_kwh + agent.buffer_kwh + EPS:
        return Role.SELLER
    return Role.NEUTRAL


def deficit(agent: EVAgent) -> float:
    if classify_role(agent) is not Role.BUYER:
        return 0.0
    return agent.need_kwh - agent.battery_kwh


def avail(agent: EVAgent) -> float:
    if classify_role(agent) is not Role.SELLER:
        return 0.0
    return agent.battery_kwh - agent.need_kwh - agent.buffer_kwh


def trade_cap(agent: EVAgent, cfg: SimConfig) -> float:
    """Largest quantity the agent may offer this step: role bound and charger power."""
    role = classify_role(agent)
    if role is Role.BUYER:
        return min(deficit(agent), agent.max_power_kw * cfg.dt_hours)
    if role is Role.SELLER:
        return min(avail(agent), agent.max_power_kw * cfg.dt_hours)
    return 0.0
