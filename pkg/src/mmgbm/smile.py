"""Volatility smiles and term structure implied by regime-switching call prices."""
from __future__ import annotations

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MMGBMError, RankDeficient
from .iv import DirectPricer, NormalizedPricer, implied_vol, stable_step
from .model import ModelParams

REFERENCE_JUMP_MATRIX = ((0.0, 2 / 3, 1 / 3), (0.5, 0.0, 0.5), (1 / 3, 2 / 3, 0.0))


def default_strikes(lo=0.8, hi=1.2, step=0.02) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(n + 1), 12)


@dataclass(frozen=True, eq=False)
class SmileCurve:
    strikes: np.ndarray
    iv: np.ndarray  # (n_strikes, k)
    spot: float
    ttm: float

    def __post_init__(self):
        if np.any(np.diff(self.strikes) <= 0):
            raise ValueError("strikes must be strictly increasing")


@dataclass(frozen=True)
class SmileFit:
    """Least-squares quadratic ``iv ~ a2 K^2 + a1 K + a0``; ``a2`` is the smile coefficient."""

    a2: float
    a1: float
    a0: float
    residual: float

    @property
    def coefficients(self):
        return (self.a2, self.a1, self.a0)


def smile_sweep(model: ModelParams, spot: float, ttm: float, strikes, n_time=51, n_space=400,
                space_bound=1.5) -> SmileCurve:
    """IV per strike and regime at a fixed spot, one surface per strike."""
    strikes = np.asarray(strikes, dtype=float)
    pricer = DirectPricer(model, space_bound=space_bound, n_space=n_space, n_time=n_time)
    k = model.num_regimes
    iv = np.empty((len(strikes), k))
    for a, strike in enumerate(strikes):
        for i in range(k):
            price = pricer.price(spot, strike, ttm, i)
            iv[a, i] = implied_vol(price, spot, strike, ttm, model.interest_rate)
    return SmileCurve(strikes, iv, float(spot), float(ttm))


def fit_quadratic(x, y) -> SmileFit:
    """Ordinary least squares via the 3x3 normal equations."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(np.unique(x)) < 3:
        raise RankDeficient("a quadratic fit needs at least three distinct strikes")
    design = np.column_stack([x * x, x, np.ones_like(x)])
    coef = np.linalg.solve(design.T @ design, design.T @ y)
    resid = y - design @ coef
    return SmileFit(float(coef[0]), float(coef[1]), float(coef[2]), float(np.linalg.norm(resid)))


def fit_smile(curve: SmileCurve) -> list[SmileFit]:
    """One quadratic fit per regime."""
    return [fit_quadratic(curve.strikes, curve.iv[:, i]) for i in range(curve.iv.shape[1])]


@dataclass(frozen=True, eq=False)
class TermStructure:
    ttms: np.ndarray
    iv: np.ndarray  # (n_ttm, k)
    slopes: np.ndarray  # fitted d iv / d ttm per regime


def ttm_sweep(model: ModelParams, spot: float, p: float, ttms, base_step=1 / 250, n_space=400,
              space_bound=1.5) -> TermStructure:
    """IV against time to maturity for strike ``p * spot``; one surface serves every ttm."""
    ttms = np.asarray(ttms, dtype=float)
    if np.any(ttms <= 0) or np.any(np.diff(ttms) <= 0):
        raise ValueError("ttms must be positive and ascending")
    dt = stable_step(model, float(ttms.max()), base_step)
    pricer = NormalizedPricer(model, dt, space_bound=space_bound, n_space=n_space)
    pricer.surface_for(float(ttms.max()))
    k = model.num_regimes
    strike = p * spot
    iv = np.empty((len(ttms), k))
    for a, tau in enumerate(ttms):
        for i in range(k):
            iv[a, i] = implied_vol(pricer.price(spot, strike, tau, i), spot, strike, tau, model.interest_rate)
    slopes = np.array([np.polyfit(ttms, iv[:, i], 1)[0] for i in range(k)])
    return TermStructure(ttms, iv, slopes)


# ---------------------------------------------------------------------------
# parameter sweep


@dataclass(frozen=True)
class SweepSpec:
    rates: tuple = (0.01, 0.1)
    sigma_levels: tuple = (0.1, 0.5)
    lambda_levels: tuple = (0.5, 3.0)
    jump_matrix: tuple = REFERENCE_JUMP_MATRIX
    num_regimes: int = 3
    spot: float = 1.0
    ttm: float = 0.1
    strikes: tuple = tuple(default_strikes())
    n_time: int = 26
    n_space: int = 200
    space_bound: float = 1.5

    def cases(self):
        """Enumerate (sigma, lambda, r) with r varying fastest; all-equal sigma skipped."""
        k = self.num_regimes
        out = []
        for sig in itertools.product(self.sigma_levels, repeat=k):
            if len(set(sig)) == 1:
                continue
            for lam in itertools.product(self.lambda_levels, repeat=k):
                for r in self.rates:
                    out.append((sig, lam, r))
        return out


@dataclass(frozen=True)
class SweepCase:
    case_id: int
    sigma: tuple
    lambdas: tuple
    rate: float
    fits: tuple = ()
    error: str | None = None
    iv: np.ndarray | None = field(default=None, compare=False, repr=False)


def _run_case(args):
    case_id, sig, lam, r, spec = args
    try:
        model = ModelParams.from_jump_chain(lam, spec.jump_matrix, drift=[r] * len(sig), volatility=sig,
                                            interest_rate=r)
        curve = smile_sweep(model, spec.spot, spec.ttm, spec.strikes, n_time=spec.n_time,
                            n_space=spec.n_space, space_bound=spec.space_bound)
        return SweepCase(case_id, sig, lam, r, tuple(fit_smile(curve)), None, curve.iv)
    except MMGBMError as exc:
        return SweepCase(case_id, sig, lam, r, (), f"{type(exc).__name__}: {exc}")


def parameter_sweep(spec: SweepSpec | None = None, cases=None, workers: int = 1) -> list[SweepCase]:
    """Smile fits for every case of ``spec`` (or the given subset of case ids).

    Failures are recorded on the case, not raised.  Output order is the
    case order regardless of ``workers``.
    """
    spec = spec or SweepSpec()
    all_cases = spec.cases()
    ids = range(1, len(all_cases) + 1) if cases is None else cases
    jobs = [(cid, *all_cases[cid - 1], spec) for cid in ids]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_case, jobs))
    return [_run_case(job) for job in jobs]


def stratified_subset(spec: SweepSpec | None = None, size: int = 12) -> list[int]:
    """Evenly spaced case ids covering the sweep; keeps r-pairs together."""
    spec = spec or SweepSpec()
    n = len(spec.cases())
    pairs = n // 2
    picks = np.unique(np.linspace(0, pairs - 1, size // 2).round().astype(int))
    return [int(2 * p + j + 1) for p in picks for j in (0, 1)]


def write_sweep_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case_id", "regime", "a2", "a1", "a0", "residual"])
        for case in results:
            for i, fit in enumerate(case.fits):
                w.writerow([case.case_id, i + 1, repr(fit.a2), repr(fit.a1), repr(fit.a0), repr(fit.residual)])
