import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2vtrade.clearing import ClearingResult, Trade, clear_nash
from v2vtrade.domain import Offer, Role, SimConfig, ValuationParams, classify_role, trade_cap
from v2vtrade.env import (
    OBS_DIM,
    FleetState,
    InfeasibleResult,
    apply_trades,
    buyer_valuation,
    observe,
    private_value,
    reset_fleet,
    role_counts,
    seller_cost,
    step_arrivals_departures,
    urgency,
)

from helpers import make_agent

# first Poisson(2.5) draw of default_rng(42); recorded once
GOLDEN_ARRIVALS_SEED42 = 4


def _state(agents, step=0, seed=0):
    return FleetState(step, tuple(agents), np.random.default_rng(seed), 1000)


def test_zero_rate_only_departures(cfg):
    leaving = make_agent(1, entry=0, duration=1)
    staying = make_agent(2, entry=0, duration=5)
    out = step_arrivals_departures(_state([leaving, staying], step=1), cfg, rate=0.0)
    assert [a.id for a in out.agents] == [2]


def test_golden_poisson_arrivals():
    cfg = SimConfig(n_target=20)
    assert cfg.arrival_rate == 2.5
    for _ in range(2):
        out = step_arrivals_departures(FleetState(0, (), np.random.default_rng(42), 0), cfg)
        assert len(out.agents) == GOLDEN_ARRIVALS_SEED42


def test_last_step_agent_departs(cfg):
    a = make_agent(1, entry=0, duration=4)
    assert a.remaining_steps(3) == 1
    out = step_arrivals_departures(_state([a], step=4), cfg, rate=0.0)
    assert out.agents == ()


def test_population_cap():
    cfg = SimConfig(n_target=2)
    out = step_arrivals_departures(FleetState(0, (), np.random.default_rng(0), 0), cfg, rate=50.0)
    assert len(out.agents) == cfg.max_population


def test_new_agents_sampled_in_ranges():
    cfg = SimConfig(n_target=50)
    st_ = step_arrivals_departures(FleetState(3, (), np.random.default_rng(7), 0), cfg, rate=40.0)
    for a in st_.agents:
        assert 4 <= a.duration_steps <= 12
        assert 0.2 <= a.battery_kwh / a.capacity_kwh <= 0.9
        assert 0.5 <= a.need_kwh / a.capacity_kwh <= 0.95
        assert 0.0 <= a.rho <= 1.0
        assert a.entry_step == 3


def test_urgency_examples(cfg):
    a = make_agent(u_base=0.2, entry=0, duration=8)
    assert urgency(a, 4, cfg) == pytest.approx(0.45)
    assert urgency(a, 0, cfg) == pytest.approx(0.2)
    assert urgency(a, 8, cfg) == pytest.approx(0.7)


def test_urgency_monotone(cfg):
    a = make_agent(u_base=0.1, entry=2, duration=9)
    u = [urgency(a, t, cfg) for t in range(2, 11)]
    assert all(x <= y for x, y in zip(u, u[1:]))


def test_buyer_valuation_examples(cfg):
    a = make_agent(battery=55.0, need=75.0, u_base=0.2, entry=0, duration=8)
    assert buyer_valuation(a, 4, cfg) == pytest.approx(0.20 + 0.10 * 0.45 + 0.15 * 20 / 75)
    rich = SimConfig(valuation=ValuationParams(v_base_buy=0.6))
    assert buyer_valuation(a, 4, rich) == 0.50


def test_seller_cost_examples(cfg):
    s = make_agent(battery=50.0 + 3.75 + 15.0, need=50.0, buffer=3.75, rho=0.5)
    assert seller_cost(s, 0, cfg) == pytest.approx(0.27)
    s0 = make_agent(battery=68.75, need=50.0, buffer=3.75, rho=0.0)
    assert seller_cost(s0, 0, cfg) == pytest.approx(0.12 - 0.05 * 0.2 + 0.02)
    cheap = SimConfig(valuation=ValuationParams(c_base_sell=0.0, delta_degrad=0.0))
    assert seller_cost(s0, 0, cheap) == 0.05


def test_private_value_neutral_is_zero(cfg):
    assert private_value(make_agent(battery=52.0, need=50.0), 0, cfg) == 0.0


def test_observe_examples(cfg):
    full = make_agent(battery=75.0, need=50.0, entry=0, duration=6)
    o = observe(full, 0, cfg)
    assert o.battery == 1.0
    assert o.remaining == 1.0
    assert o.last_price == 0.0
    assert o.to_array().shape == (OBS_DIM,)


@given(
    st.floats(0.0, 75.0), st.floats(1.0, 75.0), st.integers(1, 12), st.integers(0, 11),
    st.floats(0.0, 0.5), st.floats(0.1, 0.3),
)
def test_observation_normalized(b, need, dur, elapsed, lp, ub):
    cfg = SimConfig()
    a = make_agent(battery=b, need=need, duration=dur, entry=0, last_price=lp, u_base=ub)
    x = observe(a, min(elapsed, dur - 1), cfg).to_array()
    assert np.all(x >= 0) and np.all(x <= 1)
    assert x[-3:].sum() == 1.0


def test_apply_trades_examples(cfg):
    b = make_agent(1, battery=40.0, need=60.0)
    s = make_agent(2, battery=60.0, need=40.0)
    r = ClearingResult(trades=(Trade(1, 2, 2.0, 0.25),))
    out = apply_trades(_state([b, s]), r, cfg).by_id()
    assert out[1].battery_kwh == pytest.approx(41.9)
    assert out[2].battery_kwh == pytest.approx(58.0)
    assert out[1].last_price == 0.25
    s2 = make_agent(3, battery=60.0, need=40.0)
    out = apply_trades(_state([b, s2]), ClearingResult(trades=(Trade(1, 3, 5.0, 0.3),)), cfg).by_id()
    assert out[3].battery_kwh == pytest.approx(55.0)


def test_apply_empty_result_only_advances_clock(cfg):
    st0 = _state([make_agent(1), make_agent(2, battery=60.0)], step=5)
    st1 = apply_trades(st0, ClearingResult(), cfg)
    assert st1.step == 6 and st1.agents == st0.agents


def test_apply_trades_infeasible(cfg):
    s = make_agent(2, battery=2.0, need=1.0, buffer=0.0)
    b = make_agent(1, battery=0.0, need=50.0)
    with pytest.raises(InfeasibleResult):
        apply_trades(_state([b, s]), ClearingResult(trades=(Trade(1, 2, 5.0, 0.2),)), cfg)
    with pytest.raises(InfeasibleResult):
        apply_trades(_state([b]), ClearingResult(trades=(Trade(1, 99, 1.0, 0.2),)), cfg)


def test_last_price_is_volume_weighted(cfg):
    b = make_agent(1, battery=10.0, need=60.0)
    s1 = make_agent(2, battery=70.0, need=40.0)
    s2 = make_agent(3, battery=70.0, need=40.0)
    r = ClearingResult(trades=(Trade(1, 2, 1.0, 0.2), Trade(1, 3, 3.0, 0.4)))
    out = apply_trades(_state([b, s1, s2]), r, cfg).by_id()
    assert out[1].last_price == pytest.approx((0.2 + 1.2) / 4)


def test_energy_conservation_per_pair(cfg, rng):
    st0 = reset_fleet(SimConfig(n_target=12), 3)
    agents = st0.agents
    offers = [Offer(a.id, classify_role(a), 0.3 if classify_role(a) is Role.BUYER else 0.1,
                    trade_cap(a, cfg)) for a in agents]
    r = clear_nash(offers, st0.by_id(), cfg)
    st1 = apply_trades(st0, r, cfg)
    before, after = st0.by_id(), st1.by_id()
    for aid in before:
        bought = sum(t.quantity for t in r.trades if t.buyer_id == aid)
        sold = sum(t.quantity for t in r.trades if t.seller_id == aid)
        assert after[aid].battery_kwh - before[aid].battery_kwh == pytest.approx(cfg.eta * bought - sold, abs=1e-9)


def test_reset_is_deterministic():
    cfg = SimConfig(n_target=10)
    a = reset_fleet(cfg, 11)
    b = reset_fleet(cfg, 11)
    assert a.agents == b.agents
    for _ in range(20):
        a = step_arrivals_departures(apply_trades(a, ClearingResult(), cfg), cfg)
        b = step_arrivals_departures(apply_trades(b, ClearingResult(), cfg), cfg)
    assert a.agents == b.agents


def test_parked_agents_satisfy_schedule():
    cfg = SimConfig(n_target=15)
    st_ = reset_fleet(cfg, 5)
    for _ in range(60):
        for a in st_.agents:
            assert a.entry_step <= st_.step < a.departure_step()
        st_ = step_arrivals_departures(apply_trades(st_, ClearingResult(), cfg), cfg)


def _role_fractions(n_target=20, steps=480, seed=0):
    cfg = SimConfig(n_target=n_target)
    st_ = reset_fleet(cfg, seed)
    counts = np.zeros(3)
    for _ in range(steps):
        c = role_counts(st_.agents)
        counts += [c[Role.BUYER], c[Role.SELLER], c[Role.NEUTRAL]]
        st_ = step_arrivals_departures(apply_trades(st_, ClearingResult(), cfg), cfg)
    return counts / counts.sum()


@pytest.mark.xfail(
    strict=True,
    reason="the stated SoC and need ranges imply about 74% buyers, 20% sellers, 6% neutrals; see the decisions ledger",
)
def test_role_fractions_in_stated_bands():
    fb, fs, fn = _role_fractions()
    assert 0.40 <= fb <= 0.60
    assert 0.20 <= fs <= 0.35
    assert 0.15 <= fn <= 0.30


def test_role_fractions_match_sampling_distributions():
    # analytic fractions of the untraded fleet under the sampling ranges
    rng = np.random.default_rng(0)
    soc = rng.uniform(0.2, 0.9, 400_000)
    need = rng.uniform(0.5, 0.95, 400_000)
    p_buy = np.mean(soc < need)
    p_sell = np.mean(soc > need + 0.05)
    fb, fs, _ = _role_fractions(steps=960, seed=1)
    assert fb == pytest.approx(p_buy, abs=0.04)
    assert fs == pytest.approx(p_sell, abs=0.04)
