"""Recover the hidden regime from the implied-volatility series.

Strikes and expiries are snapped to a traded grid, the IV values are
histogrammed, and the histogram minima split them into regimes.

Run: python demos/recovery.py [steps]
"""
import sys

import numpy as np

from mmgbm.model import MarketScenario, reference_model
from mmgbm.recover import recover, simulate_market

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 400
model = reference_model()
market = simulate_market(MarketScenario(model, rng_seed=0), steps)
series, result, hist = recover(market, "rounded", p=1.0, tau=0.12)

print(f"{steps} daily observations, {len(np.flatnonzero(np.diff(market.true_regimes)))} regime changes")
print(f"histogram bin width {hist.width:g} after {hist.refinements} refinements")
print("cutoffs", np.round(result.cutoffs, 4).tolist())
print(f"accuracy {result.accuracy:.4f}")
print("confusion (rows true regime, columns assigned):")
print(result.confusion)
