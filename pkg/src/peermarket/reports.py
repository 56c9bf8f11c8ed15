"""Delimited-text report writers and readers.

Every emitted file starts with a ``# peermarket <kind> v1`` marker line.
Output is deterministic: fixed agent and line ordering, fixed float
formats, and no timestamps or machine-specific content, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .community import CONSUMER
from .engine import ACTIVE_TRADE_TOL
from .errors import ValidationError
from .policies import perceived_price
from .sweep import SweepRecord

PLOT_THRESHOLD = 1e-2  # MW; below this a trade is noise on a market map

_F = "{:.6f}".format


def _bool(flag):
    return "true" if flag else "false"


def _write(path, kind, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"# peermarket {kind} v1\n")
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(row) + "\n")


def clearing_price(result):
    """Volume-weighted mean bilateral price over active trades.

    At a free-market equilibrium every active pair shares the consensus
    price, so this reduces to the uniform clearing price.
    """
    weights = np.where(result.trades > ACTIVE_TRADE_TOL, result.trades, 0.0)
    total = weights.sum()
    if total == 0.0:
        return float("nan")
    return float((weights * result.prices).sum() / total)


def active_trade_count(result, threshold=PLOT_THRESHOLD):
    """Unordered pairs trading more than threshold MW."""
    return int((result.trades > threshold).sum())


def write_trades(path, community, result, gamma):
    """Per ordered partner pair: MW, price, fee price, perceived price."""
    mask = community.partner_mask()
    rows = []
    for i, agent in enumerate(community.agents):
        for j, partner in enumerate(community.agents):
            if not mask[i, j]:
                continue
            y = result.prices[i, j]
            g = gamma[i, j]
            rows.append(
                (
                    str(agent.id),
                    str(partner.id),
                    _F(result.trades[i, j]),
                    _F(y),
                    _F(g),
                    _F(perceived_price(y, g)),
                )
            )
    _write(path, "trades", ["n", "m", "trade_mw", "price", "gamma", "perceived_price"], rows)


def write_residuals(path, result):
    rows = [
        (str(k + 1), "{:.9f}".format(price), "{:.9f}".format(primal))
        for k, (price, primal) in enumerate(
            zip(result.price_residuals, result.primal_residuals)
        )
    ]
    _write(path, "residuals", ["iteration", "price_residual", "primal_residual"], rows)


def write_powerflow(path, network, flows):
    rows = []
    for line, flow, rate in zip(network.lines, flows.flows, flows.rates):
        rows.append((str(line.from_bus), str(line.to_bus), _F(flow), _F(rate)))
    _write(path, "powerflow", ["from_bus", "to_bus", "flow_mw", "rate"], rows)


def write_congestion(path, report):
    rows = [(str(a), str(b), _F(rate)) for (a, b), rate in report]
    _write(path, "congestion", ["from_bus", "to_bus", "rate"], rows)


def write_trade_edges(path, community, network, result, threshold=PLOT_THRESHOLD):
    """Positive-side trade list for market maps, one row per unordered pair."""
    mask = community.partner_mask()
    rows = []
    for i, agent in enumerate(community.agents):
        for j, partner in enumerate(community.agents):
            mw = result.trades[i, j]
            if mw <= 0.0 or not mask[i, j]:
                continue
            crossing = "intra" if network.zone_of(agent.bus) == network.zone_of(partner.bus) else "inter"
            rows.append(
                (
                    str(agent.id),
                    str(partner.id),
                    _F(mw),
                    crossing,
                    _bool(mw > threshold),
                )
            )
    _write(path, "trade-edges", ["n", "m", "trade_mw", "zone_crossing", "relevant"], rows)


def write_metrics(path, pairs):
    """key = value lines; pairs is an iterable of (key, formatted value)."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("# peermarket metrics v1\n")
        for key, value in pairs:
            handle.write(f"{key} = {value}\n")


def write_sweep(path, records):
    rows = []
    for r in records:
        rows.append(
            (
                _F(r.fee),
                _bool(r.converged),
                str(r.iterations),
                _F(r.volume),
                _F(r.gamma_so),
                _F(r.interzone),
                _F(r.avg_rate),
                _F(r.max_rate),
                f"{r.max_line[0]}-{r.max_line[1]}",
            )
        )
    _write(
        path,
        "sweep",
        [
            "fee",
            "converged",
            "iterations",
            "volume_mw",
            "gamma_so",
            "interzone_mw",
            "avg_rate",
            "max_rate",
            "max_line",
        ],
    rows,
    )


def read_sweep(path):
    """Parse a sweep table back into SweepRecords."""
    records = []
    with open(path, encoding="utf-8") as handle:
        first = handle.readline()
        if not first.startswith("# peermarket sweep v"):
            raise ValidationError(f"{path}: not a peermarket sweep file")
        header = handle.readline().strip().split(",")
        if header != [
            "fee",
            "converged",
            "iterations",
            "volume_mw",
            "gamma_so",
            "interzone_mw",
            "avg_rate",
            "max_rate",
            "max_line",
        ]:
            raise ValidationError(f"{path}: unexpected sweep columns {header}")
        for lineno, raw in enumerate(handle, start=3):
            raw = raw.strip()
            if not raw or raw.startswith("#"):
                continue
            parts = raw.split(",")
            if len(parts) != 9:
                raise ValidationError(f"{path}:{lineno}: expected 9 fields")
            try:
                a, b = parts[8].split("-")
                records.append(
                    SweepRecord(
                        fee=float(parts[0]),
                        converged=parts[1] == "true",
                        iterations=int(parts[2]),
                        volume=float(parts[3]),
                        gamma_so=float(parts[4]),
                        interzone=float(parts[5]),
                        avg_rate=float(parts[6]),
                        max_rate=float(parts[7]),
                        max_line=(int(a), int(b)),
                    )
                )
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: malformed sweep row") from None
    if not records:
        raise ValidationError(f"{path}: empty sweep table")
    return records


def write_fee_curves(path, records):
    """Fee against average rate, maximum rate and operator revenue."""
    rows = [
        (_F(r.fee), _F(r.avg_rate), _F(r.max_rate), _F(r.gamma_so)) for r in records
    ]
    _write(path, "fee-curves", ["fee", "avg_rate", "max_rate", "gamma_so"], rows)


def write_rate_distribution(path, network, rate_table):
    """Per-line rates at every swept fee; rate_table is (fee, rates) pairs."""
    rows = []
    for fee, rates in rate_table:
        for line, rate in zip(network.lines, rates):
            rows.append((_F(fee), str(line.from_bus), str(line.to_bus), _F(rate)))
    _write(path, "rate-distribution", ["fee", "from_bus", "to_bus", "rate"], rows)


def write_distance_matrix(path, community, matrix, metric):
    ids = [str(agent.id) for agent in community.agents]
    rows = []
    for aid, row in zip(ids, matrix):
        rows.append((aid, *[_F(v) for v in row]))
    _write(path, f"distances-{metric}", ["agent", *ids], rows)
