"""Grid cost allocation policies and fee accounting.

A policy turns a scalar network fee u into a matrix of product
differentiation prices gamma. gamma_nm is positive for producers and
negative for consumers, so gamma_nm * P_nm is a cost for every agent and the
system operator's revenue is always nonnegative. Costs are split equally
between the two sides of a trade, hence the /2 in every formula:

    unique    |gamma_nm| = u / 2
    distance  |gamma_nm| = u * d_nm / 2      (d_nm electrical distance)
    zonal     |gamma_nm| = u * N_nm / 2      (N_nm zones crossed)

The free policy is gamma = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .community import PRODUCER
from .distances import POWER_TRANSFER, distance_matrix, zone_crossing_matrix
from .errors import ValidationError

FREE = "free"
UNIQUE = "unique"
DISTANCE = "distance"
ZONAL = "zonal"
KINDS = (FREE, UNIQUE, DISTANCE, ZONAL)


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    fee: float = 0.0
    metric: str = POWER_TRANSFER

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown policy kind {self.kind!r}")
        if self.fee < 0:
            raise ValidationError("network fee must be nonnegative")


def build_gamma(policy, community, network=None, distances=None, zone_counts=None):
    """Product differentiation price matrix for a community.

    The distance policy needs a DistanceMatrix (or a network to compute one
    with policy.metric); the zonal policy needs a zone-crossing matrix (or a
    network). Entries vanish outside the partnership mask.
    """
    n = len(community.agents)
    mask = community.partner_mask()
    sign = np.array([1.0 if ag.role == PRODUCER else -1.0 for ag in community.agents])
    if policy.kind == FREE:
        return np.zeros((n, n))
    if policy.kind == UNIQUE:
        magnitude = np.full((n, n), policy.fee / 2.0)
    elif policy.kind == DISTANCE:
        if distances is None:
            if network is None:
                raise ValidationError("distance policy needs a distance matrix or a network")
            distances = distance_matrix(community, network, policy.metric)
        magnitude = policy.fee * distances.values / 2.0
    else:
        if zone_counts is None:
            if network is None:
                raise ValidationError("zonal policy needs zone counts or a network")
            zone_counts = zone_crossing_matrix(community, network)
        magnitude = policy.fee * np.asarray(zone_counts, dtype=float) / 2.0
    return np.where(mask, sign[:, None] * magnitude, 0.0)


def perceived_price(y_nm, gamma_nm):
    """Price net of the grid charge: what the agent actually pays/receives."""
    return y_nm - gamma_nm


def agent_payment(trades_row, prices_row, gamma_row):
    """(total money, operator share) for one agent's trade row.

    Total money is signed from the agent's side (negative = the agent pays);
    the operator share is nonnegative under the sign convention.
    """
    trades_row = np.asarray(trades_row, dtype=float)
    perceived = perceived_price(np.asarray(prices_row, dtype=float),
                                np.asarray(gamma_row, dtype=float))
    total = float(np.dot(perceived, trades_row))
    operator = float(np.dot(np.asarray(gamma_row, dtype=float), trades_row))
    return total, operator


def total_collected(trades, gamma):
    """System operator revenue from differentiation prices over all trades."""
    return float(np.sum(np.asarray(gamma) * np.asarray(trades)))
