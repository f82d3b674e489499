"""Market mechanisms.

Every mechanism takes role-masked offers plus the parked fleet and returns a
``ClearingResult`` whose utilities are measured at submitted bids and asks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .domain import EPS, EVAgent, Offer, Role, SimConfig, avail, deficit
from .optim import DEFAULT_EPSILON, AllocationProblem, solve_allocation

# trades below this size are solver noise from the interior-point iterate
MIN_TRADE_KWH = 1e-9


class InfeasiblePair(ValueError):
    pass


@dataclass(frozen=True)
class Trade:
    buyer_id: int
    seller_id: int
    quantity: float
    price: float


@dataclass(frozen=True)
class ClearingResult:
    trades: tuple[Trade, ...] = ()
    buyer_utils: Mapping[int, float] = field(default_factory=dict)
    seller_utils: Mapping[int, float] = field(default_factory=dict)
    matched: frozenset = frozenset()
    bids: Mapping[int, float] = field(default_factory=dict)
    asks: Mapping[int, float] = field(default_factory=dict)

    @property
    def volume(self) -> float:
        return float(sum(t.quantity for t in self.trades))

    def utility(self, agent_id: int) -> float:
        if agent_id in self.buyer_utils:
            return self.buyer_utils[agent_id]
        return self.seller_utils.get(agent_id, 0.0)

    def trades_of(self, agent_id: int) -> list[Trade]:
        return [t for t in self.trades if t.buyer_id == agent_id or t.seller_id == agent_id]


def nash_price(bid: float, ask: float) -> float:
    """Symmetric bilateral bargaining price: the maximizer of (bid - p)(p - ask)."""
    if bid < ask:
        raise InfeasiblePair(f"bid {bid} below ask {ask}")
    return 0.5 * (bid + ask)


@dataclass
class _Book:
    buyers: list[Offer]
    sellers: list[Offer]
    buyer_caps: np.ndarray
    seller_caps: np.ndarray

    @property
    def bids(self) -> np.ndarray:
        return np.array([o.price for o in self.buyers])

    @property
    def asks(self) -> np.ndarray:
        return np.array([o.price for o in self.sellers])


def _cap(offer: Offer, agent: EVAgent, cfg: SimConfig) -> float:
    bound = deficit(agent) if offer.role is Role.BUYER else avail(agent)
    return max(0.0, min(bound, offer.quantity, agent.max_power_kw * cfg.dt_hours))


def build_book(offers: Sequence[Offer], fleet: Mapping[int, EVAgent], cfg: SimConfig) -> _Book:
    """Active buyers and sellers (nonzero offers), ordered by agent id."""
    buyers = sorted((o for o in offers if o.role is Role.BUYER and o.quantity > 0), key=lambda o: o.agent_id)
    sellers = sorted((o for o in offers if o.role is Role.SELLER and o.quantity > 0), key=lambda o: o.agent_id)
    return _Book(
        buyers,
        sellers,
        np.array([_cap(o, fleet[o.agent_id], cfg) for o in buyers]),
        np.array([_cap(o, fleet[o.agent_id], cfg) for o in sellers]),
    )


def _result(book: _Book, trades: list[Trade]) -> ClearingResult:
    bids = {o.agent_id: o.price for o in book.buyers}
    asks = {o.agent_id: o.price for o in book.sellers}
    bu = dict.fromkeys(bids, 0.0)
    su = dict.fromkeys(asks, 0.0)
    for t in trades:
        bu[t.buyer_id] += (bids[t.buyer_id] - t.price) * t.quantity
        su[t.seller_id] += (t.price - asks[t.seller_id]) * t.quantity
    matched = frozenset(a for t in trades for a in (t.buyer_id, t.seller_id))
    return ClearingResult(tuple(trades), bu, su, matched, bids, asks)


def clear_nash(
    offers: Sequence[Offer],
    fleet: Mapping[int, EVAgent],
    cfg: SimConfig,
    rng=None,
    epsilon: float = DEFAULT_EPSILON,
    tol: float = 1e-6,
) -> ClearingResult:
    """Midpoint prices on every feasible pair, quantities from the log-Nash-welfare program."""
    book = build_book(offers, fleet, cfg)
    if not book.buyers or not book.sellers:
        return _result(book, [])
    g = book.bids[:, None] - book.asks[None, :]
    feasible = g >= 0
    if not feasible.any():
        return _result(book, [])
    prob = AllocationProblem(g, book.buyer_caps, book.seller_caps, epsilon, feasible)
    x = solve_allocation(prob, tol=tol).x
    trades = []
    for i, j in zip(*np.nonzero(feasible & (x > MIN_TRADE_KWH))):
        b, s = book.buyers[i], book.sellers[j]
        trades.append(Trade(b.agent_id, s.agent_id, float(x[i, j]), nash_price(b.price, s.price)))
    return _result(book, trades)


def _greedy(book: _Book, rng) -> list[Trade]:
    rng = np.random.default_rng(rng)
    pairs = [(i, j) for i in range(len(book.buyers)) for j in range(len(book.sellers))
             if book.buyers[i].price >= book.sellers[j].price]
    rem_b = book.buyer_caps.copy()
    rem_s = book.seller_caps.copy()
    trades = []
    for k in rng.permutation(len(pairs)):
        i, j = pairs[k]
        q = min(rem_b[i], rem_s[j])
        if q <= EPS:
            continue
        rem_b[i] -= q
        rem_s[j] -= q
        b, s = book.buyers[i], book.sellers[j]
        trades.append(Trade(b.agent_id, s.agent_id, float(q), nash_price(b.price, s.price)))
    return trades


def clear_greedy_average(offers: Sequence[Offer], fleet: Mapping[int, EVAgent], cfg: SimConfig, rng=None) -> ClearingResult:
    """Midpoint prices; feasible pairs filled greedily in a seeded random order."""
    book = build_book(offers, fleet, cfg)
    return _result(book, _greedy(book, rng))


def clear_learning_only(offers: Sequence[Offer], fleet: Mapping[int, EVAgent], cfg: SimConfig, rng=None) -> ClearingResult:
    # no mechanism of its own: same random-order midpoint matching as greedy average
    return clear_greedy_average(offers, fleet, cfg, rng)


def clear_double_auction(offers: Sequence[Offer], fleet: Mapping[int, EVAgent], cfg: SimConfig, rng=None) -> ClearingResult:
    """Rank matching of sorted bids and asks at the marginal pair's midpoint."""
    book = build_book(offers, fleet, cfg)
    if not book.buyers or not book.sellers:
        return _result(book, [])
    # stable sorts, ties broken by agent id
    bo = sorted(range(len(book.buyers)), key=lambda i: (-book.buyers[i].price, book.buyers[i].agent_id))
    so = sorted(range(len(book.sellers)), key=lambda j: (book.sellers[j].price, book.sellers[j].agent_id))
    ranks = []
    for i, j in zip(bo, so):
        if book.buyers[i].price < book.sellers[j].price:
            break
        ranks.append((i, j))
    if not ranks:
        return _result(book, [])
    mi, mj = ranks[-1]
    price = nash_price(book.buyers[mi].price, book.sellers[mj].price)
    trades = []
    for i, j in ranks:
        q = min(book.buyer_caps[i], book.seller_caps[j])
        if q > EPS:
            trades.append(Trade(book.buyers[i].agent_id, book.sellers[j].agent_id, float(q), price))
    return _result(book, trades)


Mechanism = Callable[..., ClearingResult]

MECHANISMS: dict[str, Mechanism] = {
    "nash": clear_nash,
    "greedy_avg": clear_greedy_average,
    "double_auction": clear_double_auction,
    "learning_only": clear_learning_only,
}


def get_mechanism(name: str) -> Mechanism:
    try:
        return MECHANISMS[name]
    except KeyError:
        raise ValueError(f"unknown mechanism {name!r}; choose from {sorted(MECHANISMS)}") from None
