"""Implied volatility of an at-the-money call along a simulated path.

The series only moves when the regime switches, and its level per regime
hardly depends on the spot.

Run: python demos/aivp.py
"""
import numpy as np

from mmgbm.iv import DirectPricer, implied_vol, mean_iv_by_state
from mmgbm.model import MarketScenario, reference_model
from mmgbm.recover import build_aivp, jump_instants, simulate_market

model = reference_model()
market = simulate_market(MarketScenario(model, rng_seed=3), 60)
series = build_aivp(market, "fixed", p=1.0, tau=0.1)

for j in range(0, len(series), 5):
    print(f"day {j:3d}  spot {market.spots[j]:.4f}  regime {market.true_regimes[j] + 1}  iv {series.iv[j]:.5f}")
print("iv jumps at", jump_instants(series.iv).tolist())
print("regime changes at", (np.flatnonzero(np.diff(market.true_regimes)) + 1).tolist())

# constancy in spot: mean IV per (spot level, regime) over a spot ladder
levels = np.round(np.arange(0.8, 1.2001, 0.05), 12)
pricer = DirectPricer(model)
iv, reg, sp = [], [], []
for s in levels:
    for i in range(3):
        iv.append(implied_vol(pricer.price(s, s, 0.1, i), s, s, 0.1, model.interest_rate))
        reg.append(i)
        sp.append(s)
    pricer.clear()
means = mean_iv_by_state(iv, reg, sp, levels, 3)
for i in range(3):
    print(f"regime {i + 1}: mean iv {means.means[i].mean():.5f}, relative spread over spots {means.rel_spread[i]:.1e}")
