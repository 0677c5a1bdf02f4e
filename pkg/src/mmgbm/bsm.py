"""Black-Scholes-Merton closed forms and the lognormal transition kernel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .model import Contract, ModelParams

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class BsmInputs:
    spot: float
    strike: float
    ttm: float
    rate: float
    vol: float


def norm_cdf(x):
    """Standard normal CDF (``scipy.special.ndtr``; absolute error below 1e-16)."""
    return ndtr(x)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def _broadcast(*args):
    arrs = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in args))
    return [np.array(a, ndmin=1) for a in arrs], arrs[0].shape


def _finish(out, shape):
    out = out.reshape(shape)
    return out if out.ndim else float(out)


def _d1(s, k, tau, r, sigma):
    vol_sqrt = sigma * np.sqrt(tau)
    return (np.log(s / k) + (r + 0.5 * sigma * sigma) * tau) / vol_sqrt


def call_price(s, k, tau, r, sigma):
    """Vectorised BSM call price.

    The degenerate limits are returned exactly: ``(s - K)^+`` at ``tau == 0``
    and ``(s - K e^{-r tau})^+`` at ``sigma == 0``.  In the money the price is
    formed as forward intrinsic plus the put, which avoids cancellation.
    Inputs broadcast.
    """
    (s, k, tau, r, sigma), shape = _broadcast(s, k, tau, r, sigma)
    disc_k = k * np.exp(-r * tau)
    out = np.maximum(s - disc_k, 0.0)
    live = (tau > 0) & (sigma > 0)
    if np.any(live):
        sl, kl, tl, rl, vl = s[live], k[live], tau[live], r[live], sigma[live]
        with np.errstate(divide="ignore"):
            d1 = _d1(sl, kl, tl, rl, vl)
        d2 = d1 - vl * np.sqrt(tl)
        dk = disc_k[live]
        call = sl * ndtr(d1) - dk * ndtr(d2)
        # in the money the direct form cancels; parity keeps the time value at full precision
        put = dk * ndtr(-d2) - sl * ndtr(-d1)
        out[live] = np.where(sl > dk, (sl - dk) + put, call)
    return _finish(out, shape)


def bsm_price(inp: BsmInputs) -> float:
    return call_price(inp.spot, inp.strike, inp.ttm, inp.rate, inp.vol)


def call_vega(s, k, tau, r, sigma):
    """dC/dsigma = s * pdf(d1) * sqrt(tau); zero when tau or sigma is zero."""
    (s, k, tau, r, sigma), shape = _broadcast(s, k, tau, r, sigma)
    out = np.zeros(s.shape)
    live = (tau > 0) & (sigma > 0)
    if np.any(live):
        d1 = _d1(s[live], k[live], tau[live], r[live], sigma[live])
        out[live] = s[live] * norm_pdf(d1) * np.sqrt(tau[live])
    return _finish(out, shape)


def bsm_vega(inp: BsmInputs) -> float:
    return call_vega(inp.spot, inp.strike, inp.ttm, inp.rate, inp.vol)


def lognormal_density(x, s, v, r, sigma):
    """Density at ``x`` of LN(ln s + (r - sigma^2/2) v, sigma^2 v).

    Zero for ``x <= 0``.  Vectorised over all arguments.
    """
    (x, s, v, sigma), shape = _broadcast(x, s, v, sigma)
    out = np.zeros(x.shape)
    pos = x > 0
    if np.any(pos):
        xs, ss, vs, sg = x[pos], s[pos], v[pos], sigma[pos]
        scale = sg * np.sqrt(vs)
        z = (np.log(xs / ss) - (r - 0.5 * sg * sg) * vs) / scale
        out[pos] = np.exp(-0.5 * z * z) / (_SQRT_2PI * scale * xs)
    return _finish(out, shape)


def lognormal_pdf(x, s, i: int, v, params: ModelParams):
    """Transition density of the spot over ``v`` years while frozen in regime ``i``."""
    return lognormal_density(x, s, v, params.interest_rate, params.volatility[i])


def truncation_cdf(bound, s, i: int, v, params: ModelParams):
    """P(S_v <= bound) under the regime-``i`` lognormal kernel started at ``s``."""
    sigma = params.volatility[i]
    r = params.interest_rate
    (bound, s, v), shape = _broadcast(bound, s, v)
    with np.errstate(divide="ignore"):
        z = (np.log(bound / s) - (r - 0.5 * sigma * sigma) * v) / (sigma * np.sqrt(v))
    return _finish(ndtr(z), shape)


def asymptotic_slope_gap(t: float, contract: Contract, rate: float) -> float:
    """Large-spot limit of ``s - price``: the discounted strike K e^{-r(T - t)}."""
    if not 0 <= t <= contract.maturity:
        raise ValueError("t must lie in [0, maturity]")
    return contract.strike * np.exp(-rate * (contract.maturity - t))
