"""Regime recovery from an implied-volatility time series.

A market path is simulated under the physical measure, an IV series is
built from regime-switching call prices along it, and the IV values are
split into regimes at the local minima of their histogram.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ClusteringAmbiguous
from .iv import IVSeries, iv_process_fixed, iv_process_rounded
from .markov import RegimePath, make_rng, simulate_ctmc, state_at
from .model import MarketScenario, ModelParams


@dataclass(frozen=True, eq=False)
class SimulatedMarket:
    """Spot path sampled every ``h`` years with the regime in force at each instant."""

    times: np.ndarray
    spots: np.ndarray
    true_regimes: np.ndarray
    model: ModelParams
    h: float
    seed: int
    path: RegimePath | None = None

    def __post_init__(self):
        if not (len(self.times) == len(self.spots) == len(self.true_regimes)):
            raise ValueError("times, spots and regimes must be aligned")
        if np.any(self.spots <= 0):
            raise ValueError("spots must be positive")

    def __len__(self):
        return len(self.times)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "spot", "regime"])
            for t, s, x in zip(self.times, self.spots, self.true_regimes):
                w.writerow([repr(float(t)), repr(float(s)), int(x) + 1])


def simulate_market(scenario: MarketScenario, horizon_steps: int | None = None) -> SimulatedMarket:
    """Observe ``horizon_steps`` instants ``0, h, 2h, ...`` of a regime-switching GBM.

    Between instants the spot takes the exact lognormal step with the drift
    and volatility of the regime at the left endpoint.  The chain and the
    normal shocks use independent streams spawned from the scenario seed.
    """
    model = scenario.model
    n = int(scenario.horizon if horizon_steps is None else horizon_steps)
    if n < 0:
        raise ValueError("horizon_steps must be non-negative")
    h = float(scenario.step)
    x0 = int(scenario.initial_regime)
    if n == 0:
        empty = np.empty(0)
        path = RegimePath(np.zeros(1), np.array([x0], dtype=np.int64), 0.0)
        return SimulatedMarket(empty, empty, np.empty(0, dtype=np.int64), model, h, scenario.rng_seed, path)

    chain_seed, shock_seed = np.random.SeedSequence(scenario.rng_seed).spawn(2)
    path = simulate_ctmc(model, x0, n * h, seed=make_rng(chain_seed))
    times = h * np.arange(n)
    regimes = np.asarray(state_at(path, times), dtype=np.int64).reshape(n)
    z = make_rng(shock_seed).standard_normal(n - 1)

    mu = model.drift[regimes[:-1]]
    sig = model.volatility[regimes[:-1]]
    log_steps = (mu - 0.5 * sig * sig) * h + sig * np.sqrt(h) * z
    spots = scenario.initial_price * np.exp(np.concatenate([[0.0], np.cumsum(log_steps)]))
    return SimulatedMarket(times, spots, regimes, model, h, scenario.rng_seed, path)


def build_aivp(market: SimulatedMarket, mode: str, p: float, tau: float, strike_step: float = 0.01,
               expiry_step: float = 0.08, pricer=None, price_noise: float = 0.0, rng=None) -> IVSeries:
    """IV series along the market path, priced with the true regime at each instant."""
    if mode not in ("fixed", "rounded"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(market) == 0:
        empty = np.empty(0)
        return IVSeries(empty, empty, empty, empty, empty, mode, np.empty(0, dtype=np.int64), empty)
    if price_noise and rng is None:
        rng = make_rng(np.random.SeedSequence(market.seed).spawn(3)[2])
    if mode == "fixed":
        return iv_process_fixed(market.model, p, tau, market.true_regimes, market.spots, market.times,
                                pricer=pricer, price_noise=price_noise, rng=rng)
    return iv_process_rounded(market.model, p, tau, strike_step, expiry_step, market.true_regimes,
                              market.spots, market.times, pricer=pricer, price_noise=price_noise, rng=rng)


# ---------------------------------------------------------------------------
# histogram clustering


def _histogram(values, width):
    lo, hi = float(values.min()), float(values.max())
    nbins = max(int(np.ceil((hi - lo) / width - 1e-9)), 1)
    edges = lo + width * np.arange(nbins + 1)
    # left-closed bins; the maximum goes in the last bin
    idx = np.minimum(np.floor((values - lo) / width + 1e-12).astype(np.int64), nbins - 1)
    return np.bincount(idx, minlength=nbins), edges


def local_minima(counts) -> list[tuple[int, int]]:
    """Interior runs of equal counts strictly lower than both neighbours.

    Returns ``(first, last)`` bin indices per run, so a flat valley (for
    instance several empty bins between two clusters) is one minimum.
    """
    counts = np.asarray(counts)
    out = []
    a = 0
    n = len(counts)
    while a < n:
        b = a
        while b + 1 < n and counts[b + 1] == counts[a]:
            b += 1
        if a > 0 and b < n - 1 and counts[a - 1] > counts[a] and counts[b + 1] > counts[a]:
            out.append((a, b))
        a = b + 1
    return out


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    edges: np.ndarray
    width: float
    refinements: int


def histogram_cluster(iv, k: int, initial_bin_width: float = 0.01, refine_factor: float = 2.0,
                      max_refinements: int = 6, return_histogram: bool = False):
    """Cutoffs between ``k`` IV clusters at the minima of the IV histogram.

    The bin width starts at ``initial_bin_width`` and is divided by
    ``refine_factor`` until exactly ``k - 1`` interior minima appear.  Each
    cutoff is the centre of its minimum (the middle of a flat valley).
    NaNs are ignored.
    """
    if k < 2:
        raise ValueError("need at least two regimes")
    values = np.asarray(iv, dtype=float)
    values = values[np.isfinite(values)]
    if len(np.unique(values)) < k:
        raise ClusteringAmbiguous(f"fewer than {k} distinct IV values")
    width = float(initial_bin_width)
    found = []
    for level in range(max_refinements + 1):
        counts, edges = _histogram(values, width)
        minima = local_minima(counts)
        found.append(len(minima))
        if len(minima) == k - 1:
            cutoffs = np.array([0.5 * (edges[a] + edges[b + 1]) for a, b in minima])
            if return_histogram:
                return cutoffs, Histogram(counts, edges, width, level)
            return cutoffs
        width /= refine_factor
    raise ClusteringAmbiguous(
        f"expected {k - 1} histogram minima, found {found} over {max_refinements} refinements"
    )


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    cutoffs: np.ndarray
    assigned: np.ndarray
    accuracy: float | None
    confusion: np.ndarray | None  # rows true regime, columns assigned

    def transitions(self) -> np.ndarray:
        """Indices ``j`` with ``assigned[j] != assigned[j - 1]``."""
        return np.flatnonzero(np.diff(self.assigned)) + 1


def assign_regimes(iv, cutoffs, true_regimes=None, regime_order=None) -> RecoveryResult:
    """Threshold classification of an IV series into bands.

    Band ``b`` holds values in ``[cutoffs[b-1], cutoffs[b])`` and maps to
    regime ``regime_order[b]`` (default: band index, i.e. regimes already
    sorted by volatility).  Missing IVs get label -1 and count as misses.
    """
    iv = np.asarray(iv, dtype=float)
    cutoffs = np.asarray(cutoffs, dtype=float)
    if np.any(np.diff(cutoffs) <= 0):
        raise ValueError("cutoffs must be strictly increasing")
    k = len(cutoffs) + 1
    order = np.arange(k) if regime_order is None else np.asarray(regime_order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(k)):
        raise ValueError("regime_order must be a permutation of the regimes")
    band = np.searchsorted(cutoffs, iv, side="right")
    assigned = order[np.minimum(band, k - 1)]
    assigned[~np.isfinite(iv)] = -1
    if true_regimes is None:
        return RecoveryResult(cutoffs, assigned, None, None)
    truth = np.asarray(true_regimes, dtype=np.int64)
    if truth.shape != assigned.shape:
        raise ValueError("true_regimes must align with the IV series")
    confusion = np.zeros((k, k), dtype=np.int64)
    ok = assigned >= 0
    np.add.at(confusion, (truth[ok], assigned[ok]), 1)
    acc = float(np.mean(assigned == truth)) if len(truth) else 1.0
    return RecoveryResult(cutoffs, assigned, acc, confusion)


def jump_instants(iv, rel_tol: float = 1e-6) -> np.ndarray:
    """Indices where the IV series changes by more than ``rel_tol`` relative."""
    iv = np.asarray(iv, dtype=float)
    if len(iv) < 2:
        return np.empty(0, dtype=np.int64)
    change = np.abs(np.diff(iv)) > rel_tol * np.abs(iv[:-1])
    return np.flatnonzero(change) + 1


def recover(market: SimulatedMarket, mode: str, p: float, tau: float, strike_step: float = 0.01,
            expiry_step: float = 0.08, initial_bin_width: float = 0.01, pricer=None,
            price_noise: float = 0.0):
    """Simulated market to scored regime labels; returns ``(series, result, histogram)``."""
    series = build_aivp(market, mode, p, tau, strike_step, expiry_step, pricer=pricer, price_noise=price_noise)
    k = market.model.num_regimes
    cutoffs, hist = histogram_cluster(series.iv, k, initial_bin_width, return_histogram=True)
    # the lowest IV band belongs to the lowest-volatility regime
    order = np.argsort(market.model.volatility, kind="stable")
    result = assign_regimes(series.iv, cutoffs, market.true_regimes, regime_order=order)
    return series, result, hist
