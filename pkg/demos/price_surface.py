"""Regime-switching call prices on the reference grid, checked against Monte Carlo.

Run: python demos/price_surface.py
"""
import numpy as np

from mmgbm.bsm import call_price
from mmgbm.model import Contract, Grid, reference_model
from mmgbm.montecarlo import mc_call_price
from mmgbm.pricer import solve_surface, stability_check

model = reference_model()
contract = Contract(strike=1.0, maturity=0.1)
grid = Grid(n_time=51, n_space=400, space_bound=1.5)

print(stability_check(model, grid, contract.maturity).summary())
surface = solve_surface(model, contract, grid)

# price today across spots, one column per regime, against BSM at each regime's own sigma
print("\n  spot   " + "  ".join(f"phi(i={i + 1})  bsm(i={i + 1})" for i in range(3)))
for s in np.arange(0.8, 1.21, 0.05):
    row = []
    for i, sig in enumerate(model.volatility):
        row.append(f"{surface.price_ttm(0.1, s, i):9.6f}  {call_price(s, 1.0, 0.1, model.interest_rate, sig):9.6f}")
    print(f"  {s:.2f}   " + "  ".join(row))

# regime switching pulls each price toward the others; a Monte Carlo run confirms the at-the-money values
print("\nat the money, 200k Monte Carlo paths per regime")
for i in range(3):
    mc = mc_call_price(model, 1.0, i, 1.0, 0.1, n_paths=200_000, seed=i)
    print(f"  regime {i + 1}: scheme {surface.price_ttm(0.1, 1.0, i):.6f}  MC {mc.price:.6f} +- {mc.stderr:.6f}")
