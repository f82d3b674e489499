"""System objectives and evaluation statistics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from .clearing import ClearingResult
from .domain import EVAgent, Offer, Role, classify_role


class EmptyPopulation(ValueError):
    pass


class ZeroMean(ValueError):
    pass


def social_welfare(result: ClearingResult) -> float:
    return float(sum(result.buyer_utils.values()) + sum(result.seller_utils.values()))


def active_utilities(result: ClearingResult) -> np.ndarray:
    """Utilities of every buyer and seller with a nonzero offer, matched or not."""
    return np.array(list(result.buyer_utils.values()) + list(result.seller_utils.values()), dtype=float)


def jains_index(utils: Sequence[float]) -> float:
    u = np.asarray(utils, dtype=float)
    if u.size == 0:
        raise EmptyPopulation("Jain's index needs at least one active trader")
    sq = float((u**2).sum())
    if sq == 0.0:
        return 0.0
    return float(u.sum() ** 2 / (u.size * sq))


def gini(utils: Sequence[float]) -> float:
    """Mean absolute difference over twice the mean; 0 when the mean is not positive."""
    u = np.asarray(utils, dtype=float)
    if u.size == 0 or u.mean() <= 0:
        return 0.0
    diff = np.abs(u[:, None] - u[None, :]).sum()
    return float(diff / (2 * u.size**2 * u.mean()))


def match_rate(result: ClearingResult, offers: Iterable[Offer] | None = None) -> float:
    if offers is None:
        active = set(result.buyer_utils) | set(result.seller_utils)
    else:
        active = {o.agent_id for o in offers if o.role is not Role.NEUTRAL and o.quantity > 0}
    if not active:
        return 0.0
    return len(result.matched & active) / len(active)


def coefficient_of_variation(series: Sequence[float]) -> float:
    x = np.asarray(series, dtype=float)
    m = x.mean()
    if m == 0:
        raise ZeroMean("coefficient of variation undefined for zero mean")
    if x.size < 2:
        return 0.0
    return float(x.std(ddof=1) / m)


def fairness(result: ClearingResult) -> float:
    """Jain's index over active traders, 0 for an empty market."""
    u = active_utilities(result)
    return jains_index(u) if u.size else 0.0


@dataclass
class MetricsRecord:
    step: int
    sw: float
    volume_kwh: float
    gini: float
    jains: float
    p_match: float
    n_buyers: int
    n_sellers: int
    n_neutral: int
    price_mean: float
    price_std: float
    n_trades: int = 0
    price_min: float = float("nan")
    price_max: float = float("nan")
    # welfare at private valuations; diagnostic only, never fed to learning
    sw_private: float = float("nan")

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> dict:
        return asdict(self)


def private_welfare(result: ClearingResult, values: Mapping[int, float]) -> float:
    """Surplus of executed trades measured against private values instead of bids and asks."""
    return float(sum((values[t.buyer_id] - values[t.seller_id]) * t.quantity for t in result.trades))


def step_metrics(
    step: int,
    result: ClearingResult,
    offers: Sequence[Offer],
    agents: Iterable[EVAgent],
    values: Mapping[int, float] | None = None,
) -> MetricsRecord:
    counts = {r: 0 for r in Role}
    for a in agents:
        counts[classify_role(a)] += 1
    u = active_utilities(result)
    if result.trades:
        q = np.array([t.quantity for t in result.trades])
        p = np.array([t.price for t in result.trades])
        pm = float(np.average(p, weights=q))
        ps = float(np.sqrt(np.average((p - pm) ** 2, weights=q)))
        pmin, pmax = float(p.min()), float(p.max())
    else:
        pm = ps = pmin = pmax = float("nan")
    return MetricsRecord(
        step=step,
        sw=social_welfare(result),
        volume_kwh=result.volume,
        gini=gini(u),
        jains=jains_index(u) if u.size else 0.0,
        p_match=match_rate(result, offers),
        n_buyers=counts[Role.BUYER],
        n_sellers=counts[Role.SELLER],
        n_neutral=counts[Role.NEUTRAL],
        price_mean=pm,
        price_std=ps,
        n_trades=len(result.trades),
        price_min=pmin,
        price_max=pmax,
        sw_private=private_welfare(result, values) if values is not None else float("nan"),
    )


def median_iqr(x: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(x, dtype=float)
    a = a[~np.isnan(a)]
    if a.size == 0:
        return float("nan"), float("nan")
    q1, med, q3 = np.percentile(a, [25, 50, 75])
    return float(med), float(q3 - q1)


SUMMARY_METRICS = ("sw", "volume_kwh", "gini", "jains", "p_match", "price_mean")


def summarize_run(records: Sequence[MetricsRecord]) -> dict[str, float]:
    """Run-level aggregates: totals for SW/volume, per-step medians for the rest."""
    cols = {m: np.array([getattr(r, m) for r in records], dtype=float) for m in SUMMARY_METRICS}
    out: dict[str, float] = {
        "steps": len(records),
        "sw_total": float(cols["sw"].sum()),
        "sw_private_total": float(np.nansum([r.sw_private for r in records])),
        "volume_total": float(cols["volume_kwh"].sum()),
        "n_trades_total": int(sum(r.n_trades for r in records)),
    }
    for m, v in cols.items():
        out[f"{m}_median"], out[f"{m}_iqr"] = median_iqr(v)
    # per-step means over steps where both sides of the market are present
    open_ = np.array([r.n_buyers > 0 and r.n_sellers > 0 for r in records], dtype=bool)
    for m in ("p_match", "jains", "gini"):
        out[f"{m}_open"] = float(cols[m][open_].mean()) if open_.any() else float("nan")
    out["open_steps"] = int(open_.sum())
    q = np.array([r.volume_kwh for r in records])
    pm = np.array([r.price_mean for r in records])
    ok = q > 0
    out["price_vwap"] = float(np.average(pm[ok], weights=q[ok])) if ok.any() else float("nan")
    mins = [r.price_min for r in records if r.n_trades]
    maxs = [r.price_max for r in records if r.n_trades]
    out["price_lo"] = float(min(mins)) if mins else float("nan")
    out["price_hi"] = float(max(maxs)) if maxs else float("nan")
    return out


def aggregate_runs(summaries: Sequence[Mapping[str, float]], keys: Sequence[str]) -> dict[str, float]:
    """Median [IQR] and CV of run-level values across seeds and populations."""
    out = {}
    for k in keys:
        v = np.array([s[k] for s in summaries], dtype=float)
        out[f"{k}_median"], out[f"{k}_iqr"] = median_iqr(v)
        v = v[~np.isnan(v)]
        try:
            out[f"{k}_cv"] = coefficient_of_variation(v) if v.size else float("nan")
        except ZeroMean:
            out[f"{k}_cv"] = float("nan")
    return out
