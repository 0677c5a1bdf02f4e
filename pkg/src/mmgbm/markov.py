"""Continuous-time Markov chain paths for the hidden market regime."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange
from .model import ModelParams


@dataclass(frozen=True, eq=False)
class RegimePath:
    """Right-continuous piecewise-constant regime path.

    ``states[j]`` is occupied on ``[times[j], times[j+1])``; the last state
    runs to ``horizon``.  ``times[0] == 0``.
    """

    times: np.ndarray
    states: np.ndarray
    horizon: float

    @property
    def transition_times(self) -> np.ndarray:
        return self.times[1:]

    def state_at(self, t):
        return state_at(self, t)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_start", "state"])
            for t, s in zip(self.times, self.states):
                w.writerow([repr(float(t)), int(s) + 1])


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; integers and SeedSequences are accepted as seeds."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def simulate_ctmc(params: ModelParams, x0: int, horizon: float, seed=0) -> RegimePath:
    """Exponential holding times with rate lambda_i, destinations from the jump chain."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not 0 <= x0 < params.num_regimes:
        raise OutOfRange(f"initial regime {x0} out of range")
    rng = make_rng(seed)
    lam = params.exit_rates
    cum = np.cumsum(params.jump_matrix, axis=1)
    k = params.num_regimes
    times = [0.0]
    states = [x0]
    t, state = 0.0, x0
    while True:
        if lam[state] == 0:
            break
        t += rng.exponential(1.0 / lam[state])
        if t >= horizon:
            break
        state = min(int(np.searchsorted(cum[state], rng.random(), side="right")), k - 1)
        times.append(t)
        states.append(state)
    return RegimePath(np.array(times), np.array(states, dtype=np.int64), float(horizon))


def state_at(path: RegimePath, t):
    """Regime at time(s) ``t``; at a transition instant the new state is returned."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > path.horizon):
        raise OutOfRange(f"t outside [0, {path.horizon}]")
    idx = np.searchsorted(path.times, t_arr, side="right") - 1
    out = path.states[idx]
    return int(out) if out.ndim == 0 else out


def occupation_fractions(path: RegimePath, k: int) -> np.ndarray:
    durations = np.diff(np.append(path.times, path.horizon))
    return np.bincount(path.states, weights=durations, minlength=k) / path.horizon


def transition_counts(path: RegimePath, k: int) -> np.ndarray:
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (path.states[:-1], path.states[1:]), 1)
    return counts
