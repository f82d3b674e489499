"""Fleet and offer builders shared by the test modules."""

import numpy as np

from v2vtrade.domain import EVAgent, Offer, Role, SimConfig
from v2vtrade.env import OBS_DIM
from v2vtrade.learner import ACT_DIM, MLP, critic_width
from v2vtrade.learner.maddpg import NEUTRAL_COL

N_SLOTS = 3


def make_agent(aid=0, battery=30.0, need=50.0, buffer=5.0, capacity=75.0, power=11.0,
               entry=0, duration=8, u_base=0.2, rho=0.5, last_price=0.0) -> EVAgent:
    return EVAgent(
        id=aid, battery_kwh=battery, capacity_kwh=capacity, need_kwh=need, buffer_kwh=buffer,
        max_power_kw=power, entry_step=entry, duration_steps=duration, base_urgency=u_base,
        rho=rho, last_price=last_price,
    )


def buyer(aid, deficit=20.0, **kw):
    return make_agent(aid, battery=50.0 - deficit, need=50.0, **kw)


def seller(aid, avail=20.0, **kw):
    return make_agent(aid, battery=55.0 + avail, need=50.0, buffer=5.0, **kw)


def market(bids, asks, bid_q=None, ask_q=None, cfg=None, big=True):
    """Offers plus a fleet whose physical bounds never bind unless asked to.

    ``big`` uses a 1000 kWh battery and 1000 kW charger so caps come from offers.
    """
    cfg = cfg or SimConfig()
    bid_q = bid_q if bid_q is not None else [10.0] * len(bids)
    ask_q = ask_q if ask_q is not None else [10.0] * len(asks)
    kw = dict(capacity=2000.0, power=4000.0) if big else {}
    fleet, offers = {}, []
    for k, (p, q) in enumerate(zip(bids, bid_q)):
        a = make_agent(k, battery=0.0, need=1000.0, **kw)
        fleet[a.id] = a
        offers.append(Offer(a.id, Role.BUYER, p, q))
    for k, (p, q) in enumerate(zip(asks, ask_q)):
        a = make_agent(100 + k, battery=1500.0, need=500.0, buffer=5.0, **kw)
        fleet[a.id] = a
        offers.append(Offer(a.id, Role.SELLER, p, q))
    return offers, fleet, cfg


def random_market(rng: np.random.Generator, max_b=3, max_s=3, cfg=None, physical=False):
    """Random offers on a random fleet; ``physical`` keeps default batteries and chargers."""
    cfg = cfg or SimConfig()
    nb = int(rng.integers(1, max_b + 1))
    ns = int(rng.integers(1, max_s + 1))
    bids = rng.uniform(cfg.price_min, cfg.price_max, nb).round(4)
    asks = rng.uniform(cfg.price_min, cfg.price_max, ns).round(4)
    bq = rng.uniform(0.5, 10.0, nb)
    sq = rng.uniform(0.5, 10.0, ns)
    if not physical:
        return market(list(bids), list(asks), list(bq), list(sq), cfg)
    fleet, offers = {}, []
    for k in range(nb):
        a = make_agent(k, battery=float(rng.uniform(5, 45)), need=50.0)
        fleet[a.id] = a
        offers.append(Offer(a.id, Role.BUYER, float(bids[k]), float(bq[k])))
    for k in range(ns):
        a = make_agent(100 + k, battery=float(rng.uniform(56, 75)), need=50.0)
        fleet[a.id] = a
        offers.append(Offer(a.id, Role.SELLER, float(asks[k]), float(sq[k])))
    return offers, fleet, cfg


# toy networks for gradient checks

def toy_obs(rng, n, neutral=False):
    o = rng.uniform(0, 1, (n, OBS_DIM))
    o[:, -3:] = 0.0
    o[:, NEUTRAL_COL if neutral else -3] = 1.0
    return o


def toy_batch(rng, B=5, n_slots=N_SLOTS):
    present = np.zeros((B, n_slots))
    ego = np.zeros(B, dtype=np.int64)
    nxt_present = np.zeros((B, n_slots))
    nxt_ego = np.zeros(B, dtype=np.int64)
    for b in range(B):
        k = rng.integers(1, n_slots + 1)
        present[b, :k] = 1
        ego[b] = rng.integers(0, k)
        k2 = rng.integers(1, n_slots + 1)
        nxt_present[b, :k2] = 1
        nxt_ego[b] = rng.integers(-1, k2)
    return {
        "obs": rng.uniform(0, 1, (B, n_slots, OBS_DIM)) * present[..., None],
        "act": rng.uniform(0, 1, (B, n_slots, ACT_DIM)) * present[..., None],
        "present": present,
        "ego": ego,
        "reward": rng.normal(0, 1, B),
        "next_obs": rng.uniform(0, 1, (B, n_slots, OBS_DIM)) * nxt_present[..., None],
        "next_present": nxt_present,
        "next_ego": nxt_ego,
        "done": (nxt_ego < 0).astype(float),
    }


def toy_nets(rng, n_slots=N_SLOTS):
    actor = MLP((OBS_DIM, 2, ACT_DIM), rng, out_scale=None)
    critic = MLP((critic_width(n_slots), 2, 1), rng, out_scale=None)
    return actor, critic
