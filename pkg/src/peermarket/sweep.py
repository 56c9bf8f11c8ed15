"""Network fee sweeps and the operator's fee recommendation rule.

A sweep reruns the market from scratch at every fee on a strictly
increasing grid, so records are mutually independent and the table is
deterministic for a fixed scenario. Non-convergence at a grid point is
recorded, not raised; the sweep continues.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distances import distance_matrix, zone_crossing_matrix
from .engine import SolverConfig, clear_market
from .errors import ValidationError
from .network import net_injections
from .policies import DISTANCE, FREE, PolicySpec, ZONAL, build_gamma, total_collected
from .powerflow import dc_power_flow, interzone_exchange, line_rates

MAX_RATE_TARGET = "max_line_rate"
REVENUE_TARGET = "revenue"


@dataclass(frozen=True)
class SweepRecord:
    fee: float
    converged: bool
    iterations: int
    volume: float
    gamma_so: float
    interzone: float
    avg_rate: float
    max_rate: float
    max_line: tuple[int, int]


@dataclass(frozen=True)
class FeeRecommendation:
    target: str
    fee: float
    max_rate: float
    avg_rate: float
    gamma_so: float
    volume: float
    interzone: float


def run_sweep(community, network, policy, fees, config=None, slack=None, rates_out=None):
    """One independent clear_market per fee; records in grid order.

    policy fixes the kind and metric, its fee field is ignored in favor of
    the grid. Distance matrices and zone counts are computed once and
    shared, which changes nothing: gamma is homogeneous in the fee.
    rates_out, when given a list, collects (fee, per-line rates) pairs for
    the rate-distribution export.
    """
    fees = [float(u) for u in fees]
    if not fees:
        raise ValidationError("empty fee grid")
    if any(b <= a for a, b in zip(fees, fees[1:])):
        raise ValidationError("fee grid must be strictly increasing")
    if policy.kind == FREE:
        raise ValidationError("sweeping the free policy is a single point; pick a fee policy")
    config = config or SolverConfig()

    distances = None
    zone_counts = None
    if policy.kind == DISTANCE:
        distances = distance_matrix(community, network, policy.metric)
    elif policy.kind == ZONAL:
        zone_counts = zone_crossing_matrix(community, network)

    records = []
    for fee in fees:
        spec = PolicySpec(policy.kind, fee=fee, metric=policy.metric)
        gamma = build_gamma(
            spec, community, network=network, distances=distances, zone_counts=zone_counts
        )
        result = clear_market(community, gamma, config)
        injections = net_injections(community, result.net_powers, network)
        flows = dc_power_flow(network, injections, slack=slack)
        summary = line_rates(flows)
        if rates_out is not None:
            rates_out.append((fee, flows.rates))
        records.append(
            SweepRecord(
                fee=fee,
                converged=result.converged,
                iterations=result.iterations,
                volume=float(result.net_powers[result.net_powers > 0].sum()),
                gamma_so=total_collected(result.trades, gamma),
                interzone=interzone_exchange(community, result.trades, network).total,
                avg_rate=summary.average,
                max_rate=summary.maximum,
                max_line=summary.line,
            )
        )
    return records


def _interp(lo, hi, weight, pick):
    return pick(lo) + weight * (pick(hi) - pick(lo))


def recommend_fee(records, target, value=None):
    """Operator rule on a sweep table.

    target = "max_line_rate": smallest fee whose maximum line rate is at
    most `value`, linearly interpolated between bracketing grid points.
    target = "revenue": grid fee maximizing the operator's collection.
    Only converged records are considered.
    """
    usable = [r for r in records if r.converged]
    if not usable:
        raise ValidationError("no converged sweep records to recommend from")

    if target == REVENUE_TARGET:
        best = max(usable, key=lambda r: (r.gamma_so, -r.fee))
        return FeeRecommendation(
            target=REVENUE_TARGET,
            fee=best.fee,
            max_rate=best.max_rate,
            avg_rate=best.avg_rate,
            gamma_so=best.gamma_so,
            volume=best.volume,
            interzone=best.interzone,
        )
    if target != MAX_RATE_TARGET:
        raise ValidationError(f"unknown recommendation target {target!r}")
    if value is None:
        raise ValidationError("max_line_rate target needs a rate value")

    rates = [r.max_rate for r in usable]
    lowest = min(rates)
    if value < lowest:
        raise ValidationError(
            f"target rate {value:g} unachievable; sweep covers [{lowest:g}, {max(rates):g}]"
        )
    if rates[0] <= value:
        first = usable[0]
        return FeeRecommendation(
            target=MAX_RATE_TARGET,
            fee=first.fee,
            max_rate=first.max_rate,
            avg_rate=first.avg_rate,
            gamma_so=first.gamma_so,
            volume=first.volume,
            interzone=first.interzone,
        )
    for lo, hi in zip(usable, usable[1:]):
        if lo.max_rate > value >= hi.max_rate:
            weight = (lo.max_rate - value) / (lo.max_rate - hi.max_rate)
            return FeeRecommendation(
                target=MAX_RATE_TARGET,
                fee=_interp(lo, hi, weight, lambda r: r.fee),
                max_rate=value,
                avg_rate=_interp(lo, hi, weight, lambda r: r.avg_rate),
                gamma_so=_interp(lo, hi, weight, lambda r: r.gamma_so),
                volume=_interp(lo, hi, weight, lambda r: r.volume),
                interzone=_interp(lo, hi, weight, lambda r: r.interzone),
            )
    raise ValidationError(
        f"target rate {value:g} not bracketed; sweep covers [{lowest:g}, {max(rates):g}]"
    )
