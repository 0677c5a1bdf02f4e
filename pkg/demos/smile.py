"""Implied-volatility smiles produced by regime switching, with their quadratic fits.

Run: python demos/smile.py
"""
from mmgbm.model import reference_model
from mmgbm.smile import default_strikes, fit_smile, smile_sweep

model = reference_model()
curve = smile_sweep(model, spot=1.0, ttm=0.1, strikes=default_strikes())

print("strike  " + "  ".join(f"iv(i={i + 1})" for i in range(3)))
for k, row in zip(curve.strikes, curve.iv):
    print(f"{k:6.2f}  " + "  ".join(f"{v:8.5f}" for v in row))

# a2 > 0 means the smile is convex in strike
for i, fit in enumerate(fit_smile(curve)):
    print(f"regime {i + 1}: a2={fit.a2:+.4f} a1={fit.a1:+.4f} a0={fit.a0:+.4f} residual={fit.residual:.2e}")
