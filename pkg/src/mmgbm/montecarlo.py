"""Risk-neutral Monte-Carlo reference prices for regime-switching calls.

Each path simulates the regime chain exactly (exponential holding times,
jump-chain destinations) and then draws the terminal spot from its exact
conditional law: given the regime path, ``ln S_T`` is normal with mean
``ln s + r T - V/2`` and variance ``V = int_0^T sigma(X_u)^2 du``.
This shares no code with the integral-equation solver.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams


@dataclass(frozen=True)
class MCEstimate:
    price: float
    stderr: float
    n_paths: int


def integrated_variance(model: ModelParams, x0: int, horizon: float, n_paths: int, rng) -> np.ndarray:
    """Sample ``int_0^horizon sigma(X_u)^2 du`` for ``n_paths`` chains started in ``x0``."""
    sig2 = model.volatility**2
    lam = model.exit_rates
    cum_p = np.cumsum(model.jump_matrix, axis=1)
    state = np.full(n_paths, x0, dtype=np.int64)
    clock = np.zeros(n_paths)
    var = np.zeros(n_paths)
    active = np.ones(n_paths, dtype=bool)
    while np.any(active):
        idx = np.flatnonzero(active)
        s = state[idx]
        rate = lam[s]
        with np.errstate(divide="ignore"):
            hold = np.where(rate > 0, rng.exponential(1.0, idx.size) / np.where(rate > 0, rate, 1.0), np.inf)
        remaining = horizon - clock[idx]
        stay = np.minimum(hold, remaining)
        var[idx] += sig2[s] * stay
        clock[idx] += stay
        jumped = hold < remaining
        done = idx[~jumped]
        active[done] = False
        movers = idx[jumped]
        if movers.size:
            u = rng.random(movers.size)
            rows = cum_p[state[movers]]
            state[movers] = np.minimum((u[:, None] > rows).sum(axis=1), model.num_regimes - 1)
    return var


def mc_call_price(
    model: ModelParams,
    spot: float,
    regime: int,
    strike: float,
    maturity: float,
    n_paths: int = 1_000_000,
    seed: int = 0,
    batch: int = 250_000,
) -> MCEstimate:
    """Discounted mean payoff and its standard error (PCG64 generator)."""
    rng = np.random.default_rng(seed)
    r = model.interest_rate
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_paths:
        m = min(batch, n_paths - done)
        v = integrated_variance(model, regime, maturity, m, rng)
        z = rng.standard_normal(m)
        s_t = spot * np.exp(r * maturity - 0.5 * v + np.sqrt(v) * z)
        pay = np.exp(-r * maturity) * np.maximum(s_t - strike, 0.0)
        total += pay.sum()
        total_sq += (pay * pay).sum()
        done += m
    mean = total / n_paths
    var = max(total_sq / n_paths - mean * mean, 0.0) * n_paths / (n_paths - 1)
    return MCEstimate(mean, float(np.sqrt(var / n_paths)), n_paths)
