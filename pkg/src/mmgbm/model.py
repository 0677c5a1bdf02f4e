"""Market, contract and grid parameter types plus the config-file reader.

Regimes are indexed from 0 inside the library.  The config file and all CSV
outputs use 1-based regime labels, as is customary when writing ``X_0 = 1``.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import (
    NegativeOffDiagonal,
    NonConservativeRateMatrix,
    NonpositiveVolatility,
    ParseError,
    ValidationError,
)

ROW_SUM_TOL = 1e-12

DEFAULT_RATE = 0.05
DEFAULT_STEP = 1 / 250
DEFAULT_SEED = 0


def _as_vector(values, name):
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Rate matrix, per-regime drift and volatility, and the bank rate.

    Construction validates everything (see :func:`validate`), so a
    ``ModelParams`` instance is always consistent.
    """

    rate_matrix: np.ndarray
    drift: np.ndarray
    volatility: np.ndarray
    interest_rate: float = DEFAULT_RATE
    jump_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lam = np.array(self.rate_matrix, dtype=float)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1] or lam.shape[0] < 1:
            raise ValidationError(f"rate_matrix must be square k x k, got shape {lam.shape}")
        k = lam.shape[0]
        mu = _as_vector(self.drift, "drift")
        sigma = _as_vector(self.volatility, "volatility")
        if mu.shape != (k,) or sigma.shape != (k,):
            raise ValidationError(
                f"drift and volatility must have length {k}, got {mu.shape[0]} and {sigma.shape[0]}"
            )
        for arr in (lam, mu, sigma):
            arr.flags.writeable = False
        object.__setattr__(self, "rate_matrix", lam)
        object.__setattr__(self, "drift", mu)
        object.__setattr__(self, "volatility", sigma)
        object.__setattr__(self, "interest_rate", float(self.interest_rate))
        validate(self)

    @property
    def num_regimes(self) -> int:
        return self.rate_matrix.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        """lambda_i = |lambda_ii|."""
        return np.abs(np.diag(self.rate_matrix))

    @property
    def switching_matrix(self) -> np.ndarray:
        """Jump-chain probabilities with the diagonal zeroed (only j != i terms)."""
        p = self.jump_matrix.copy()
        np.fill_diagonal(p, 0.0)
        return p

    def norm_inf(self) -> float:
        return float(np.abs(self.rate_matrix).sum(axis=1).max())

    def stationary_distribution(self) -> np.ndarray:
        """Solve pi Lambda = 0 with sum(pi) = 1 (least squares for reducible chains)."""
        k = self.num_regimes
        a = np.vstack([self.rate_matrix.T, np.ones(k)])
        b = np.zeros(k + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(a, b, rcond=None)
        return pi

    def with_(self, **changes) -> ModelParams:
        fields = dict(
            rate_matrix=self.rate_matrix,
            drift=self.drift,
            volatility=self.volatility,
            interest_rate=self.interest_rate,
        )
        fields.update(changes)
        return ModelParams(**fields)

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            np.array_equal(self.rate_matrix, other.rate_matrix)
            and np.array_equal(self.drift, other.drift)
            and np.array_equal(self.volatility, other.volatility)
            and self.interest_rate == other.interest_rate
        )

    __hash__ = None

    @classmethod
    def from_jump_chain(cls, exit_rates, jump_matrix, drift, volatility, interest_rate=DEFAULT_RATE):
        """Build Lambda from exit rates and an off-diagonal jump matrix P."""
        lam = np.asarray(exit_rates, dtype=float)
        p = np.array(jump_matrix, dtype=float)
        np.fill_diagonal(p, 0.0)
        rate = lam[:, None] * p
        np.fill_diagonal(rate, -lam)
        return cls(rate, drift, volatility, interest_rate)


def validate(params: ModelParams) -> ModelParams:
    """Check the rate-matrix and volatility invariants; cache the jump chain.

    Raises NonConservativeRateMatrix, NegativeOffDiagonal or
    NonpositiveVolatility.  Returns ``params`` itself.
    """
    lam = params.rate_matrix
    k = lam.shape[0]
    off = lam[~np.eye(k, dtype=bool)]
    if np.any(off < 0):
        raise NegativeOffDiagonal("off-diagonal rates must be non-negative")
    row_sums = lam.sum(axis=1)
    scale = np.maximum(1.0, np.abs(np.diag(lam)))
    bad = np.abs(row_sums) > ROW_SUM_TOL * scale
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NonConservativeRateMatrix(f"row {i + 1} of rate matrix sums to {row_sums[i]!r}, expected 0")
    if not np.all(np.isfinite(params.volatility)) or np.any(params.volatility <= 0):
        raise NonpositiveVolatility("volatility must be strictly positive in every regime")
    if not np.isfinite(params.interest_rate) or params.interest_rate < 0:
        raise ValidationError("interest_rate must be a finite non-negative number")

    exit_rates = np.abs(np.diag(lam))
    p = np.eye(k)
    moving = exit_rates > 0
    idx = np.flatnonzero(moving)
    p[idx] = lam[idx] / exit_rates[idx, None]
    p[idx, idx] = 0.0
    # re-normalise away the last few ulps so rows are stochastic to 1e-12
    p[idx] /= p[idx].sum(axis=1, keepdims=True)
    p.flags.writeable = False
    object.__setattr__(params, "jump_matrix", p)
    return params


@dataclass(frozen=True)
class Contract:
    """European call: strike K, maturity T (years), evaluation time t."""

    strike: float
    maturity: float
    evaluation_time: float = 0.0
    moneyness: float | None = None
    ttm: float | None = None

    def __post_init__(self):
        if not self.strike > 0:
            raise ValidationError("strike must be positive")
        if not self.maturity > 0:
            raise ValidationError("maturity must be positive")
        if not 0 <= self.evaluation_time <= self.maturity:
            raise ValidationError("evaluation_time must lie in [0, maturity]")
        if self.moneyness is not None and not self.moneyness > 0:
            raise ValidationError("moneyness must be positive")
        if self.ttm is not None:
            if not self.ttm > 0:
                raise ValidationError("ttm must be positive")
            if abs(self.ttm - (self.maturity - self.evaluation_time)) > 1e-12:
                raise ValidationError("ttm must equal maturity - evaluation_time")


@dataclass(frozen=True)
class Grid:
    """Discretisation for the integral-equation solver.

    ``n_time`` steps over the contract life and ``n_space`` (even) steps over
    the truncated price domain ``[0, space_bound]``.
    """

    n_time: int
    n_space: int
    space_bound: float

    def __post_init__(self):
        if int(self.n_time) != self.n_time or self.n_time < 1:
            raise ValidationError("n_time must be a positive integer")
        if int(self.n_space) != self.n_space or self.n_space < 2:
            raise ValidationError("n_space must be an integer >= 2")
        if self.n_space % 2:
            raise ValidationError("n_space must be even (Simpson weights in the space direction)")
        if not self.space_bound > 0:
            raise ValidationError("space_bound must be positive")

    @property
    def ds(self) -> float:
        return self.space_bound / self.n_space

    def dt(self, maturity: float) -> float:
        return maturity / self.n_time

    @property
    def spots(self) -> np.ndarray:
        return np.arange(self.n_space + 1) * self.ds

    def check_contract(self, contract: Contract) -> None:
        if not self.space_bound > contract.strike:
            raise ValidationError("space_bound must exceed the strike")


@dataclass(frozen=True)
class MarketScenario:
    """Real-world simulation setup for the regime-recovery experiments."""

    model: ModelParams
    initial_price: float = 1.0
    initial_regime: int = 0
    step: float = DEFAULT_STEP
    horizon: int = 200
    rng_seed: int = DEFAULT_SEED
    strike_step: float = 0.01
    expiry_step: float = 0.08

    def __post_init__(self):
        if not self.initial_price > 0:
            raise ValidationError("initial_price must be positive")
        if not 0 <= self.initial_regime < self.model.num_regimes:
            raise ValidationError("initial_regime out of range")
        if not self.step > 0:
            raise ValidationError("step must be positive")
        if int(self.horizon) != self.horizon or self.horizon < 0:
            raise ValidationError("horizon must be a non-negative integer number of steps")
        if not 0 <= self.rng_seed < 2**64:
            raise ValidationError("rng_seed must be an unsigned 64-bit integer")
        if not (self.strike_step > 0 and self.expiry_step > 0):
            raise ValidationError("strike_step and expiry_step must be positive")


# ---------------------------------------------------------------------------
# config files

_SCHEMA = {
    "model": {"rate_matrix": True, "drift": True, "volatility": True, "interest_rate": False},
    "contract": {"strike": True, "maturity": True, "evaluation_time": False, "moneyness": False, "ttm": False},
    "grid": {"n_time": True, "n_space": True, "space_bound": True},
    "scenario": {
        "initial_price": False,
        "initial_regime": False,
        "step": False,
        "horizon": False,
        "seed": False,
        "strike_step": False,
        "expiry_step": False,
    },
}
_REQUIRED_SECTIONS = ("model", "contract", "grid")


def _number(text: str) -> float:
    # Fraction accepts "20/3", "-10", "0.05", "1e-3"
    return float(Fraction(text.strip()))


def _line_of(lines, section, key=None):
    current = None
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return no
    return None


def parse_config(text: str):
    """Parse config text into ``(MarketScenario, Contract, Grid)``."""
    lines = text.splitlines()
    if not any(ln.strip() and not ln.strip().startswith(("#", ";")) for ln in lines):
        raise ParseError("config is empty", line=1)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside of any section", line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", line=lineno) from exc
    except configparser.Error as exc:
        raise ParseError(str(exc), line=getattr(exc, "lineno", None)) from exc

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ParseError(f"unknown section [{section}]", line=_line_of(lines, section))
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ParseError(f"unknown key {key!r} in [{section}]", line=_line_of(lines, section, key))
    for section in _REQUIRED_SECTIONS:
        if not cp.has_section(section):
            raise ParseError(f"missing section [{section}]")
    for section, keys in _SCHEMA.items():
        if not cp.has_section(section):
            continue
        for key, required in keys.items():
            if required and key not in cp[section]:
                raise ParseError(f"missing key {key!r} in [{section}]", line=_line_of(lines, section))

    def num(section, key, default=None):
        if not cp.has_section(section) or key not in cp[section]:
            return default
        try:
            return _number(cp[section][key])
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"{section}.{key}: not a number", line=_line_of(lines, section, key)) from exc

    def vec(section, key):
        raw = cp[section][key]
        try:
            return [_number(x) for x in raw.split(",") if x.strip()]
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"{section}.{key}: bad vector", line=_line_of(lines, section, key)) from exc

    def mat(section, key):
        raw = cp[section][key]
        try:
            rows = [[_number(x) for x in row.split(",") if x.strip()] for row in raw.split(";") if row.strip()]
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"{section}.{key}: bad matrix", line=_line_of(lines, section, key)) from exc
        if len({len(r) for r in rows}) != 1:
            raise ParseError(f"{section}.{key}: ragged matrix rows", line=_line_of(lines, section, key))
        return rows

    def integer(section, key, default=None):
        value = num(section, key, default)
        if value is None:
            return None
        if value != int(value):
            raise ParseError(f"{section}.{key}: expected an integer", line=_line_of(lines, section, key))
        return int(value)

    model = ModelParams(
        rate_matrix=mat("model", "rate_matrix"),
        drift=vec("model", "drift"),
        volatility=vec("model", "volatility"),
        interest_rate=num("model", "interest_rate", DEFAULT_RATE),
    )
    contract = Contract(
        strike=num("contract", "strike"),
        maturity=num("contract", "maturity"),
        evaluation_time=num("contract", "evaluation_time", 0.0),
        moneyness=num("contract", "moneyness"),
        ttm=num("contract", "ttm"),
    )
    grid = Grid(
        n_time=integer("grid", "n_time"),
        n_space=integer("grid", "n_space"),
        space_bound=num("grid", "space_bound"),
    )
    grid.check_contract(contract)
    scenario = MarketScenario(
        model=model,
        initial_price=num("scenario", "initial_price", 1.0),
        initial_regime=integer("scenario", "initial_regime", 1) - 1,
        step=num("scenario", "step", DEFAULT_STEP),
        horizon=integer("scenario", "horizon", 200),
        rng_seed=integer("scenario", "seed", DEFAULT_SEED),
        strike_step=num("scenario", "strike_step", 0.01),
        expiry_step=num("scenario", "expiry_step", 0.08),
    )
    return scenario, contract, grid


def load_config(path):
    """Read a config file; see README for the accepted keys."""
    return parse_config(Path(path).read_text())


def dump_config(scenario: MarketScenario, contract: Contract, grid: Grid) -> str:
    """Serialise a parameter bundle; ``parse_config`` reads it back exactly."""
    m = scenario.model

    def vec(v):
        return ", ".join(repr(float(x)) for x in v)

    out = [
        "[model]",
        "rate_matrix = " + "; ".join(vec(row) for row in m.rate_matrix),
        "drift = " + vec(m.drift),
        "volatility = " + vec(m.volatility),
        f"interest_rate = {m.interest_rate!r}",
        "",
        "[contract]",
        f"strike = {float(contract.strike)!r}",
        f"maturity = {float(contract.maturity)!r}",
        f"evaluation_time = {float(contract.evaluation_time)!r}",
    ]
    if contract.moneyness is not None:
        out.append(f"moneyness = {float(contract.moneyness)!r}")
    if contract.ttm is not None:
        out.append(f"ttm = {float(contract.ttm)!r}")
    out += [
        "",
        "[grid]",
        f"n_time = {grid.n_time}",
        f"n_space = {grid.n_space}",
        f"space_bound = {float(grid.space_bound)!r}",
        "",
        "[scenario]",
        f"initial_price = {float(scenario.initial_price)!r}",
        f"initial_regime = {scenario.initial_regime + 1}",
        f"step = {float(scenario.step)!r}",
        f"horizon = {scenario.horizon}",
        f"seed = {scenario.rng_seed}",
        f"strike_step = {float(scenario.strike_step)!r}",
        f"expiry_step = {float(scenario.expiry_step)!r}",
        "",
    ]
    return "\n".join(out)


def reference_model(interest_rate: float = 0.05) -> ModelParams:
    """The three-regime running example (sigma = 0.2, 0.3, 0.4)."""
    return ModelParams(
        rate_matrix=[[-10.0, 20 / 3, 10 / 3], [10.0, -20.0, 10.0], [10 / 3, 20 / 3, -10.0]],
        drift=[0.08, 0.09, 0.1],
        volatility=[0.2, 0.3, 0.4],
        interest_rate=interest_rate,
    )
