"""Per-agent training reward: base utility, counterfactual credit, price proximity, IR penalty."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .clearing import ClearingResult, Mechanism
from .domain import EVAgent, Offer, Role, SimConfig
from .metrics import fairness, match_rate, social_welfare


@dataclass(frozen=True)
class RewardWeights:
    alpha_r: float = 1.0
    w_price: float = 1.0
    kappa_price: float = 10.0
    mu: float = 5.0
    lambda_w: float = 0.01
    lambda_1: float = 1.0
    lambda_2: float = 1.0
    # ablation switches
    use_price_prox: bool = True
    use_credit: bool = True
    use_global: bool = True
    base_only: bool = False

    def __post_init__(self):
        for name in ("alpha_r", "w_price", "kappa_price", "mu", "lambda_w", "lambda_1", "lambda_2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def variant(cls, name: str, **kw) -> "RewardWeights":
        """Named reward variants: full, no_price_prox, no_credit, no_global, base_only."""
        flags = {
            "full": {},
            "no_price_prox": {"use_price_prox": False},
            "no_credit": {"use_credit": False},
            "no_global": {"use_global": False},
            "base_only": {"base_only": True},
        }
        if name not in flags:
            raise ValueError(f"unknown reward variant {name!r}")
        return cls(**{**kw, **flags[name]})


@dataclass(frozen=True)
class RewardBreakdown:
    base: float
    credit: float
    price_prox: float
    ir_penalty: float
    total: float


def base_utility(agent_id: int, result: ClearingResult, value: float | None = None) -> float:
    """Utility from this step's trades.

    With ``value=None`` this is the recorded utility at the agent's own submitted
    price. Passing the agent's private value (willingness to pay, or minimum
    acceptable price) measures the same trades against it instead.
    """
    if value is None:
        return result.utility(agent_id)
    u = 0.0
    for t in result.trades_of(agent_id):
        u += (value - t.price) * t.quantity if t.buyer_id == agent_id else (t.price - value) * t.quantity
    return u


def collective_reward(result: ClearingResult, weights: RewardWeights, offers: Sequence[Offer] | None = None) -> float:
    return (
        weights.lambda_w * social_welfare(result)
        + weights.lambda_1 * fairness(result)
        + weights.lambda_2 * match_rate(result, offers)
    )


def no_trade(offer: Offer) -> Offer:
    return replace(offer, quantity=0.0)


class CountingMechanism:
    """Wraps a mechanism and counts invocations."""

    def __init__(self, mechanism: Mechanism):
        self.mechanism = mechanism
        self.calls = 0

    def __call__(self, *args, **kwargs) -> ClearingResult:
        self.calls += 1
        return self.mechanism(*args, **kwargs)


def counterfactual_credits(
    offers: Sequence[Offer],
    fleet: Mapping[int, EVAgent],
    cfg: SimConfig,
    weights: RewardWeights,
    mechanism: Mechanism,
    seed: int | None = None,
) -> tuple[ClearingResult, dict[int, float]]:
    """Clear once with every offer, then once per agent with that agent's quantity zeroed.

    Exactly ``len(offers) + 1`` mechanism calls. Randomized mechanisms get the
    same seed on every call so only the removed offer differs.
    """
    offers = list(offers)
    result = mechanism(offers, fleet, cfg, seed)
    r_all = collective_reward(result, weights, offers)
    credits = {}
    for k, o in enumerate(offers):
        cf = offers[:k] + [no_trade(o)] + offers[k + 1:]
        r_cf = collective_reward(mechanism(cf, fleet, cfg, seed), weights, cf)
        credits[o.agent_id] = r_all - r_cf
    return result, credits


def counterfactual_credit(
    agent_id: int,
    offers: Sequence[Offer],
    fleet: Mapping[int, EVAgent],
    cfg: SimConfig,
    weights: RewardWeights,
    mechanism: Mechanism,
    seed: int | None = None,
) -> float:
    offers = list(offers)
    r_all = collective_reward(mechanism(offers, fleet, cfg, seed), weights, offers)
    cf = [no_trade(o) if o.agent_id == agent_id else o for o in offers]
    return r_all - collective_reward(mechanism(cf, fleet, cfg, seed), weights, cf)


def matched_counterparty(agent_id: int, result: ClearingResult) -> int | None:
    """Largest-volume counterparty; ties go to the lower id."""
    best, best_q = None, 0.0
    for t in sorted(result.trades_of(agent_id), key=lambda t: (t.seller_id, t.buyer_id)):
        other = t.seller_id if t.buyer_id == agent_id else t.buyer_id
        if t.quantity > best_q:
            best, best_q = other, t.quantity
    return best


def price_proximity(agent_id: int, offers: Sequence[Offer] | Mapping[int, Offer], result: ClearingResult, kappa: float) -> float:
    """-kappa * (own price - bargaining price with the main counterparty)^2, 0 if unmatched."""
    other = matched_counterparty(agent_id, result)
    if other is None:
        return 0.0
    by_id = offers if isinstance(offers, Mapping) else {o.agent_id: o for o in offers}
    own = by_id[agent_id]
    if own.role is Role.BUYER:
        p_nash = 0.5 * (own.price + by_id[other].price)
    else:
        p_nash = 0.5 * (by_id[other].price + own.price)
    return -kappa * (own.price - p_nash) ** 2


def compose(base: float, credit: float, price_prox: float, utility: float, weights: RewardWeights, n: int) -> RewardBreakdown:
    """Weighted total; ``utility`` is the value tested by the individual-rationality penalty."""
    ir = -weights.mu * max(0.0, -utility)
    total = weights.alpha_r * base + credit / max(n, 1) + weights.w_price * price_prox + ir
    return RewardBreakdown(base, credit, price_prox, ir, total)


def step_rewards(
    offers: Sequence[Offer],
    fleet: Mapping[int, EVAgent],
    cfg: SimConfig,
    weights: RewardWeights,
    mechanism: Mechanism,
    values: Mapping[int, float] | None = None,
    seed: int | None = None,
) -> tuple[ClearingResult, dict[int, RewardBreakdown]]:
    """Clear the market and score every agent.

    ``values`` holds private valuations; when given, base utility and the IR test
    are measured against them rather than against submitted prices. Ablations:
    ``use_credit=False`` pays the shared collective reward without the
    counterfactual baseline, ``use_global=False`` drops the collective terms
    entirely, ``base_only`` keeps only base utility.
    """
    n = len(offers)
    use_cf = weights.use_credit and weights.use_global and not weights.base_only
    if use_cf:
        result, credits = counterfactual_credits(offers, fleet, cfg, weights, mechanism, seed)
    else:
        result = mechanism(list(offers), fleet, cfg, seed)
        shared = 0.0
        if weights.use_global and not weights.base_only:
            shared = collective_reward(result, weights, offers)
        credits = {o.agent_id: shared for o in offers}

    by_id = {o.agent_id: o for o in offers}
    out = {}
    for o in offers:
        v = None if values is None else values.get(o.agent_id)
        base = base_utility(o.agent_id, result, v)
        if weights.base_only:
            out[o.agent_id] = RewardBreakdown(base, 0.0, 0.0, 0.0, weights.alpha_r * base)
            continue
        prox = price_proximity(o.agent_id, by_id, result, weights.kappa_price) if weights.use_price_prox else 0.0
        out[o.agent_id] = compose(base, credits[o.agent_id], prox, base, weights, n)
    return result, out


def reward_array(breakdowns: Mapping[int, RewardBreakdown], ids: Sequence[int]) -> np.ndarray:
    return np.array([breakdowns[i].total for i in ids])
