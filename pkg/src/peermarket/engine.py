"""Consensus-based negotiation engine for bilateral electricity trades.

Agents repeatedly exchange price signals with their trading partners while a
coordinator keeps a skew-symmetric copy of the trade matrix. One iteration
advances, in order: bilateral prices, bound multipliers, trade quantities,
coordinator copy. The loop stops when reciprocal prices agree within
``eps_price`` and agents agree with the coordinator within ``eps_primal``.

All per-agent updates within one iteration read only the frozen previous
state (prices and multipliers advance first and are then visible to the
trade step), so the sweep order never affects the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

ACTIVE_TRADE_TOL = 1e-6  # MW below which a trade counts as zero in KKT checks


@dataclass(frozen=True)
class SolverConfig:
    """Gains and stopping rules for the negotiation loop.

    The price gains decay as alpha0*k^-alpha_decay (innovation) and
    beta0*k^-beta_decay (consensus). rho steps the bound multipliers, tau and
    delta shape the per-partner gradient weights.
    """

    alpha0: float = 0.01
    alpha_decay: float = 0.05
    beta0: float = 0.1
    beta_decay: float = 0.05
    rho: float = 0.01
    tau: float = 1.0
    delta: float = 0.5
    max_iterations: int = 20000
    eps_price: float = 1e-3   # €/MW
    eps_primal: float = 1e-2  # MW

    def __post_init__(self):
        for name in ("alpha0", "beta0", "rho", "tau", "delta", "eps_price", "eps_primal"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"solver parameter {name} must be positive")
        for name in ("alpha_decay", "beta_decay"):
            if getattr(self, name) < 0:
                raise ValidationError(f"solver parameter {name} must be nonnegative")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")

    def gains(self, k):
        return (self.alpha0 * k ** (-self.alpha_decay),
                self.beta0 * k ** (-self.beta_decay))


@dataclass
class MarketState:
    """Mutable negotiation state at iteration ``k``.

    ``P`` holds the agents' trade proposals, ``Z`` the coordinator's
    skew-symmetric copy, ``y`` the bilateral prices. The community and its
    partner mask ride along so the per-pair update rules are self-contained.
    """

    community: object
    partners: np.ndarray
    k: int = 1
    P: np.ndarray = field(default=None)
    Z: np.ndarray = field(default=None)
    y: np.ndarray = field(default=None)
    mu_hi: np.ndarray = field(default=None)
    mu_lo: np.ndarray = field(default=None)

    @classmethod
    def initial(cls, community):
        n = len(community.agents)
        partners = community.partner_mask()
        start_price = float(np.mean(community.b))
        return cls(community=community, partners=partners, k=1,
                   P=np.zeros((n, n)), Z=np.zeros((n, n)),
                   y=np.where(partners, start_price, 0.0),
                   mu_hi=np.zeros(n), mu_lo=np.zeros(n))


@dataclass(frozen=True)
class ClearingResult:
    """Outcome of a negotiation run.

    ``trades`` is the coordinator's reconciled matrix, skew-symmetric by
    construction, so the delivered dispatch balances exactly. ``proposals``
    keeps the agents' own final positions; at convergence the two differ by
    at most ``eps_primal`` entrywise.
    """

    trades: np.ndarray
    proposals: np.ndarray
    prices: np.ndarray
    net_powers: np.ndarray
    mu_hi: np.ndarray
    mu_lo: np.ndarray
    iterations: int
    converged: bool
    price_residuals: np.ndarray
    primal_residuals: np.ndarray
    kkt_residual: float


def _price_matrix(state, config):
    alpha, beta = config.gains(state.k)
    y = state.y
    advanced = y - beta * (y - y.T) - alpha * (state.P - state.Z)
    return np.where(state.partners, advanced, 0.0)


def _bound_vectors(state, config):
    z_row = state.Z.sum(axis=1)
    community = state.community
    mu_hi = np.maximum(0.0, state.mu_hi + config.rho * (z_row - community.p_max))
    mu_lo = np.maximum(0.0, state.mu_lo + config.rho * (community.p_min - z_row))
    return mu_hi, mu_lo


def _weight_matrix(state, config):
    raw = np.abs(state.Z) + config.tau * state.k ** (-config.delta)
    raw = np.where(state.partners, raw, 0.0)
    return raw / raw.sum(axis=1, keepdims=True)


def _trade_matrix(state, config, gamma):
    """Per-pair gradient step toward each agent's preferred total, projected
    onto the role's trade sign. Expects prices and multipliers already
    advanced to k+1 while Z still holds the k-iterate."""
    community = state.community
    weights = _weight_matrix(state, config)
    z_row = state.Z.sum(axis=1)
    target = (state.y - gamma - state.mu_hi[:, None] + state.mu_lo[:, None]
              - community.b[:, None]) / community.a[:, None]
    candidate = state.Z + weights * (target - z_row[:, None])
    projected = np.where(community.sign[:, None] > 0,
                         np.maximum(0.0, candidate), np.minimum(0.0, candidate))
    return np.where(state.partners, projected, 0.0)


def price_update(state, config, n, m):
    """Advance one bilateral price: pull toward the partner's quote, correct
    by the disagreement with the coordinator."""
    return float(_price_matrix(state, config)[n, m])


def bounds_update(state, config, n):
    """Projected multiplier step for agent n's power bounds."""
    mu_hi, mu_lo = _bound_vectors(state, config)
    return float(mu_hi[n]), float(mu_lo[n])


def gradient_step(state, config, n, m):
    """Share of agent n's adjustment routed to partner m; each row sums to 1."""
    return float(_weight_matrix(state, config)[n, m])


def trade_update(state, config, gamma, n, m):
    return float(_trade_matrix(state, config, np.asarray(gamma, dtype=float))[n, m])


def coordinator_update(P):
    """Skew-symmetric reconciliation of both sides of every trade."""
    P = np.asarray(P, dtype=float)
    return 0.5 * (P - P.T)


def clear_market(community, gamma=None, config=None):
    """Run the negotiation to equilibrium.

    Non-convergence is reported through the ``converged`` flag with full
    residual histories, never as an exception.
    """
    config = config if config is not None else SolverConfig()
    n = len(community.agents)
    if gamma is None:
        gamma = np.zeros((n, n))
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (n, n):
        raise ValidationError(f"gamma must be {n}x{n}, got {gamma.shape}")

    state = MarketState.initial(community)
    price_hist = []
    primal_hist = []
    converged = False
    while state.k <= config.max_iterations:
        state.y = _price_matrix(state, config)
        state.mu_hi, state.mu_lo = _bound_vectors(state, config)
        state.P = _trade_matrix(state, config, gamma)
        state.Z = coordinator_update(state.P)
        price_hist.append(float(np.max(np.abs(state.y - state.y.T))))
        primal_hist.append(float(np.max(np.abs(state.P - state.Z))))
        if price_hist[-1] <= config.eps_price and primal_hist[-1] <= config.eps_primal:
            converged = True
            break
        state.k += 1

    trades = state.Z
    net = trades.sum(axis=1)
    residual = _kkt_max(state.P, state.y, state.mu_hi, state.mu_lo,
                        community, gamma, state.partners)
    return ClearingResult(
        trades=trades, proposals=state.P, prices=state.y, net_powers=net,
        mu_hi=state.mu_hi, mu_lo=state.mu_lo,
        iterations=min(state.k, config.max_iterations), converged=converged,
        price_residuals=np.asarray(price_hist), primal_residuals=np.asarray(primal_hist),
        kkt_residual=residual)


def _kkt_max(proposals, prices, mu_hi, mu_lo, community, gamma, partners):
    """Stationarity is judged on each agent's own proposals: the sign
    multiplier is active exactly where the agent's projection clipped."""
    net = proposals.sum(axis=1)
    marginal = community.a * net + community.b
    expr = marginal[:, None] - prices + gamma + mu_hi[:, None] - mu_lo[:, None]
    active = np.abs(proposals) > ACTIVE_TRADE_TOL
    # At a zero trade the stationarity expression is absorbed by the sign
    # multiplier, which only exists on one side: producers need expr >= 0,
    # consumers expr <= 0.
    sells = community.sign[:, None] > 0
    slack_violation = np.where(sells, np.maximum(0.0, -expr), np.maximum(0.0, expr))
    per_pair = np.where(active, np.abs(expr), slack_violation)
    per_pair = np.where(partners, per_pair, 0.0)
    return float(np.max(per_pair))


def kkt_residual(result, community, gamma=None):
    """Worst first-order optimality violation across all partnered pairs."""
    n = len(community.agents)
    if gamma is None:
        gamma = np.zeros((n, n))
    return _kkt_max(result.proposals, result.prices, result.mu_hi, result.mu_lo,
                    community, np.asarray(gamma, dtype=float), community.partner_mask())
