"""At-the-money implied volatility against time to maturity.

The low-volatility regime borrows variance from the others as maturity
grows, so its IV rises; the high-volatility regime's IV falls.

Run: python demos/term_structure.py
"""
import numpy as np

from mmgbm.model import reference_model
from mmgbm.smile import ttm_sweep

model = reference_model()
days = np.arange(10, 51, 5)
ts = ttm_sweep(model, spot=1.0, p=1.0, ttms=days / 250)

print("days  " + "  ".join(f"iv(i={i + 1})" for i in range(3)))
for d, row in zip(days, ts.iv):
    print(f"{d:4d}  " + "  ".join(f"{v:8.5f}" for v in row))
print("slope per year: " + ", ".join(f"{s:+.4f}" for s in ts.slopes))
