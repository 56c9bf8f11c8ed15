"""DC power flow and grid-side views of a market outcome.

Lossless linearized flow: bus angles solve the susceptance system reduced at
the slack bus, line flows follow from angle differences. Loading is reported
as rate = |flow| / capacity, congestion as rates above 1.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .distances import default_reference_bus
from .errors import ValidationError
from .network import susceptance_matrix

IMBALANCE_TOL = 1e-3  # MW per bus of allowed injection mismatch

_reduced_cache = weakref.WeakKeyDictionary()


@dataclass(frozen=True)
class FlowResult:
    """Signed per-line flows (MW, from->to positive) with loading rates."""

    flows: np.ndarray
    rates: np.ndarray
    slack: int
    lines: tuple


@dataclass(frozen=True)
class RateSummary:
    average: float
    maximum: float
    line: tuple  # (from_bus, to_bus) of the worst-loaded line


@dataclass(frozen=True)
class ZoneExchangeReport:
    """Net exchanged MW per unordered zone pair, each trade counted once."""

    pairs: tuple  # ((zone_a, zone_b), MW) sorted by zone pair
    total: float


def _reduced_system(network, slack):
    per_network = _reduced_cache.setdefault(network, {})
    if slack not in per_network:
        idx = network.bus_index(slack)
        b = susceptance_matrix(network)
        keep = [i for i in range(network.n_buses) if i != idx]
        per_network[slack] = (idx, keep, b[np.ix_(keep, keep)])
    return per_network[slack]


def dc_power_flow(network, injections, slack=None):
    """Solve the lossless flow for balanced per-bus injections (MW).

    The slack bus absorbs numerical imbalance; flows do not depend on which
    bus plays that role as long as injections are balanced.
    """
    slack = default_reference_bus(network) if slack is None else slack
    injections = np.asarray(injections, dtype=float)
    if injections.shape != (network.n_buses,):
        raise ValidationError(
            f"injections must have one entry per bus ({network.n_buses}), got {injections.shape}")
    residual = float(injections.sum())
    if abs(residual) > IMBALANCE_TOL * network.n_buses:
        raise ValidationError(
            f"injections do not balance: residual {residual:+.6f} MW exceeds "
            f"{IMBALANCE_TOL * network.n_buses:.3f} MW")
    slack_idx, keep, reduced = _reduced_system(network, slack)
    theta = np.zeros(network.n_buses)
    theta[keep] = np.linalg.solve(reduced, injections[keep] / network.base_power)
    flows = np.empty(len(network.lines))
    rates = np.empty(len(network.lines))
    for k, line in enumerate(network.lines):
        i = network.bus_index(line.from_bus)
        j = network.bus_index(line.to_bus)
        flows[k] = (theta[i] - theta[j]) / line.reactance * network.base_power
        rates[k] = abs(flows[k]) / line.capacity
    return FlowResult(flows=flows, rates=rates, slack=slack, lines=tuple(network.lines))


def line_rates(flows):
    """Loading summary; the worst line is identified by its bus pair."""
    worst = int(np.argmax(flows.rates))
    line = flows.lines[worst]
    return RateSummary(average=float(np.mean(flows.rates)),
                       maximum=float(flows.rates[worst]),
                       line=(line.from_bus, line.to_bus))


def congestion_report(flows, network):
    """Lines loaded beyond capacity, worst first."""
    over = [((line.from_bus, line.to_bus), float(rate))
            for line, rate in zip(flows.lines, flows.rates) if rate > 1.0]
    return sorted(over, key=lambda item: -item[1])


def interzone_exchange(community, trades, network):
    """Net MW moved between each pair of zones, from the trade matrix.

    Counting Sum P_nm over n in one zone, m in the other uses the positive
    side of every trade exactly once, so reciprocal entries never double.
    """
    trades = np.asarray(trades, dtype=float)
    zones = np.array([network.zone_of(agent.bus) for agent in community.agents])
    distinct = sorted(set(zones.tolist()))
    pairs = []
    total = 0.0
    for ai, za in enumerate(distinct):
        for zb in distinct[ai + 1:]:
            block = trades[np.ix_(zones == za, zones == zb)]
            mw = abs(float(block.sum()))
            pairs.append(((za, zb), mw))
            total += mw
    return ZoneExchangeReport(pairs=tuple(pairs), total=total)


def tie_line_flow(flows, network):
    """Secondary congestion-side metric: summed |flow| on zone-crossing lines."""
    total = 0.0
    for line, flow in zip(flows.lines, flows.flows):
        if network.zone_of(line.from_bus) != network.zone_of(line.to_bus):
            total += abs(float(flow))
    return total
