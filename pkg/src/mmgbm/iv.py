"""Implied volatility: inversion, regime-switching call pricing backends and IV processes."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .bsm import call_price, call_vega
from .errors import (
    EmptyBucket,
    NoConvergence,
    NonpositiveTTM,
    PriceAboveSpot,
    PriceBelowIntrinsic,
)
from .markov import RegimePath, state_at
from .model import Grid, ModelParams
from .pricer import SurfaceSolver, stability_check

VOL_LO = 1e-8
VOL_HI = 5.0
PRICE_TOL = 1e-10
# relative slack under which a ratio is treated as an exact .5 tie
TIE_TOL = 1e-9


def implied_vol(price, spot, strike, ttm, rate, *, lo=VOL_LO, hi=VOL_HI, price_tol=PRICE_TOL, max_iter=200):
    """Unique BSM volatility reproducing ``price``.

    Bisection on ``[lo, hi]`` with Newton steps (on ``ln C``) taken whenever
    they stay inside the current bracket.  Iterates until the volatility
    stops moving, then checks the price residual against ``price_tol``.
    """
    if not ttm > 0:
        raise NonpositiveTTM("ttm must be positive")
    # the zero-volatility price, computed exactly as call_price computes it
    intrinsic = call_price(spot, strike, ttm, rate, 0.0)
    if price <= intrinsic:
        raise PriceBelowIntrinsic(f"price {price!r} <= lower no-arbitrage bound {intrinsic!r}")
    if price >= spot:
        raise PriceAboveSpot(f"price {price!r} >= spot {spot!r}")

    def f(sig):
        return call_price(spot, strike, ttm, rate, sig) - price

    f_hi = f(hi)
    if f_hi < 0:
        raise NoConvergence(f"implied volatility above {hi}")
    f_lo = f(lo)
    if f_lo > 0:
        raise NoConvergence(f"implied volatility below {lo}")
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi

    # Manaster-Koehler starting point: the inflection of C in sigma
    sig = math.sqrt(2.0 * abs(math.log(spot / strike) + rate * ttm) / ttm)
    sig = min(max(sig, 0.1), 1.0)
    log_target = math.log(price)
    eps = np.finfo(float).eps
    for _ in range(max_iter):
        c = call_price(spot, strike, ttm, rate, sig)
        fs = c - price
        if fs == 0:
            return sig
        if fs > 0:
            hi = sig
        else:
            lo = sig
        vega = call_vega(spot, strike, ttm, rate, sig)
        # Newton on ln C keeps deep out-of-the-money prices well scaled
        if c > 0 and vega > 0:
            cand = sig - (math.log(c) - log_target) * c / vega
        else:
            cand = math.nan
        if not lo < cand < hi:
            cand = 0.5 * (lo + hi)
        moved = abs(cand - sig)
        sig = cand
        if moved <= 4 * eps * sig or hi - lo <= 4 * eps * hi:
            break
    fs = call_price(spot, strike, ttm, rate, sig) - price
    if abs(fs) > price_tol:
        raise NoConvergence(f"price residual {fs:.3g} exceeds {price_tol:g}")
    return sig


# ---------------------------------------------------------------------------
# pricing backends


def stable_step(model: ModelParams, max_ttm: float, base_step: float) -> float:
    """Largest ``base_step / q`` (integer q) whose grid on ``[0, max_ttm]`` passes the stability check."""
    q = 1
    while True:
        dt = base_step / q
        n = max(1, int(math.ceil(max_ttm / dt - 1e-9)))
        try:
            if stability_check(model, Grid(n, 2, 1.0), n * dt).passed:
                return dt
        except ArithmeticError:
            pass
        q += 1


class NormalizedPricer:
    """Prices every (spot, strike, ttm) from one strike-1 surface.

    Uses the homogeneity ``price(s; K) = K price(s/K; 1)`` and time
    homogeneity: level ``n`` of a surface with maturity ``N dt`` is the price
    at time-to-maturity ``n dt``.  TTMs are snapped to the nearest multiple of
    ``dt``; choose ``dt`` to divide the TTMs in use.
    """

    def __init__(self, model: ModelParams, dt: float, space_bound: float = 1.5, n_space: int = 400):
        self.model = model
        self.dt = float(dt)
        self.space_bound = space_bound
        self.n_space = n_space
        self._surface = None

    def surface_for(self, max_ttm: float):
        n = max(1, int(math.ceil(max_ttm / self.dt - 1e-9)))
        if self._surface is None or self._surface.grid.n_time < n:
            grid = Grid(n, self.n_space, self.space_bound)
            solver = SurfaceSolver(self.model, grid, n * self.dt)
            self._surface = solver.solve(1.0)
        return self._surface

    def price(self, spot, strike, ttm, regime):
        surf = self.surface_for(ttm)
        return strike * surf.price_ttm(ttm, spot / strike, regime)


class DirectPricer:
    """Solves one surface per (strike, ttm) on a fixed space grid and interpolates at the spot.

    ``steps_per_year`` sets the time step (rounded so that ``N dt = ttm``).
    The kernel block is reused across strikes sharing a ttm.
    """

    def __init__(self, model: ModelParams, space_bound: float = 1.5, n_space: int = 400, n_time: int | None = 51,
                 steps_per_year: float | None = None):
        self.model = model
        self.space_bound = space_bound
        self.n_space = n_space
        self.n_time = n_time
        self.steps_per_year = steps_per_year
        self._solver = None
        self._surfaces = {}

    def _steps(self, ttm):
        if self.steps_per_year is not None:
            return max(1, int(round(ttm * self.steps_per_year)))
        return self.n_time

    def surface(self, strike, ttm):
        key = (float(strike), float(ttm))
        if key not in self._surfaces:
            if self._solver is None or self._solver.maturity != float(ttm):
                grid = Grid(self._steps(ttm), self.n_space, self.space_bound)
                self._solver = SurfaceSolver(self.model, grid, ttm)
            self._surfaces[key] = self._solver.solve(strike)
        return self._surfaces[key]

    def price(self, spot, strike, ttm, regime):
        return self.surface(strike, ttm).price_ttm(ttm, spot, regime)

    def clear(self):
        """Drop cached surfaces (the kernel block is kept)."""
        self._surfaces.clear()


# ---------------------------------------------------------------------------
# IV processes


def round_half_down(x):
    """Nearest integer, ties toward the lower one: ``ceil(x - 1/2)``.

    Values within ``TIE_TOL`` (relative) of a .5 tie count as ties, so that
    ratios such as ``0.2 / 0.08`` are not pushed up by representation error.
    """
    x = np.asarray(x, dtype=float)
    out = np.ceil(x - 0.5 - TIE_TOL * np.maximum(1.0, np.abs(x)))
    return out.astype(np.int64) if out.ndim else int(out)


@dataclass(eq=False)
class IVSeries:
    times: np.ndarray
    iv: np.ndarray
    spot: np.ndarray
    strike: np.ndarray
    ttm: np.ndarray
    kind: str
    regime: np.ndarray | None = None
    price: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.times)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "spot", "strike_used", "ttm_used", "regime_true", "iv"])
            for j in range(len(self)):
                reg = "" if self.regime is None else int(self.regime[j]) + 1
                w.writerow([
                    repr(float(self.times[j])), repr(float(self.spot[j])), repr(float(self.strike[j])),
                    repr(float(self.ttm[j])), reg, repr(float(self.iv[j])),
                ])


def _regimes(path, times):
    if isinstance(path, RegimePath):
        return np.asarray(state_at(path, times), dtype=np.int64)
    return np.asarray(path, dtype=np.int64)


def _series(model, times, spots, strikes, ttms, regimes, pricer, kind, price_noise=0.0, rng=None):
    r = model.interest_rate
    n = len(times)
    prices = np.empty(n)
    ivs = np.empty(n)
    for j in range(n):
        prices[j] = pricer.price(spots[j], strikes[j], ttms[j], int(regimes[j]))
        quoted = prices[j]
        if price_noise:
            quoted = quoted + price_noise * rng.standard_normal()
            try:
                ivs[j] = implied_vol(quoted, spots[j], strikes[j], ttms[j], r)
            except (PriceBelowIntrinsic, PriceAboveSpot, NoConvergence):
                ivs[j] = np.nan
            continue
        ivs[j] = implied_vol(quoted, spots[j], strikes[j], ttms[j], r)
    return IVSeries(np.asarray(times, float), ivs, np.asarray(spots, float), np.asarray(strikes, float),
                    np.asarray(ttms, float), kind, regimes, prices)


def iv_process_fixed(model, p, tau, path, spots, times, pricer=None, price_noise=0.0, rng=None) -> IVSeries:
    """AIVP from contracts with strike ``p * S_t`` and ttm ``tau`` at every instant.

    ``path`` is a RegimePath (sampled right-continuously at ``times``) or an
    array of regime indices aligned with ``spots``.
    """
    spots = np.asarray(spots, dtype=float)
    times = np.asarray(times, dtype=float)
    regimes = _regimes(path, times)
    if pricer is None:
        pricer = NormalizedPricer(model, dt=stable_step(model, tau, tau / 50))
    strikes = p * spots
    ttms = np.full(len(spots), float(tau))
    return _series(model, times, spots, strikes, ttms, regimes, pricer, "fixed", price_noise, rng)


def rounded_contracts(p, tau, strike_step, expiry_step, spots, times):
    """Traded strike and ttm nearest the ideal ``(p S_t, tau)`` contract.

    Strikes live on multiples of ``strike_step`` and expiries on multiples
    of ``expiry_step``; both snap with round-half-down.
    """
    spots = np.asarray(spots, dtype=float)
    times = np.asarray(times, dtype=float)
    strikes = round_half_down(p * spots / strike_step) * strike_step
    ttms = round_half_down((times + tau) / expiry_step) * expiry_step - times
    return np.asarray(strikes, float), np.asarray(ttms, float)


def iv_process_rounded(model, p, tau, strike_step, expiry_step, path, spots, times, pricer=None,
                       price_noise=0.0, rng=None) -> IVSeries:
    """AIVP from the traded contract nearest to moneyness ``p`` and ttm ``tau``."""
    if not (strike_step > 0 and expiry_step > 0):
        raise ValueError("strike_step and expiry_step must be positive")
    spots = np.asarray(spots, dtype=float)
    times = np.asarray(times, dtype=float)
    strikes, ttms = rounded_contracts(p, tau, strike_step, expiry_step, spots, times)
    if np.any(ttms <= 1e-12):
        raise NonpositiveTTM("rounded expiry falls on or before the observation time; need tau > expiry_step / 2")
    if np.any(strikes <= 0):
        raise ValueError("rounded strike is zero; reduce strike_step")
    regimes = _regimes(path, times)
    if pricer is None:
        pricer = NormalizedPricer(model, dt=stable_step(model, float(ttms.max()), expiry_step / 40))
    return _series(model, times, spots, strikes, ttms, regimes, pricer, "rounded", price_noise, rng)


@dataclass(frozen=True)
class StateMeans:
    spot_levels: np.ndarray
    means: np.ndarray  # (k, n_levels)
    counts: np.ndarray
    rel_spread: np.ndarray  # e_i per regime


def mean_iv_by_state(iv, regimes, spots, spot_levels, k: int) -> StateMeans:
    """Mean IV per (regime, spot bucket) and the relative spread over spots.

    Each observation goes to the nearest level in ``spot_levels``.  The
    spread for regime ``i`` is ``(max_s mean - min_s mean) / min_s mean``.
    """
    iv = np.asarray(iv, dtype=float)
    regimes = np.asarray(regimes, dtype=np.int64)
    spots = np.asarray(spots, dtype=float)
    levels = np.asarray(spot_levels, dtype=float)
    bucket = np.abs(spots[:, None] - levels[None, :]).argmin(axis=1)
    sums = np.zeros((k, len(levels)))
    counts = np.zeros((k, len(levels)), dtype=np.int64)
    np.add.at(sums, (regimes, bucket), iv)
    np.add.at(counts, (regimes, bucket), 1)
    if np.any(counts == 0):
        i, j = np.argwhere(counts == 0)[0]
        raise EmptyBucket(f"no observations for regime {i + 1} at spot {levels[j]}")
    means = sums / counts
    lo = means.min(axis=1)
    return StateMeans(levels, means, counts, (means.max(axis=1) - lo) / lo)

