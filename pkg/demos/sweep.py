"""Smile coefficient across the two-level sigma/lambda/rate sweep.

By default a 12-case stratified subset runs (about 10 s); pass --full for
all 96 cases on the reduced grid (a minute or two).

Run: python demos/sweep.py [--full]
"""
import sys

import numpy as np

from mmgbm.smile import SweepSpec, parameter_sweep, stratified_subset

spec = SweepSpec()
ids = None if "--full" in sys.argv else stratified_subset(spec, 12)
results = parameter_sweep(spec, ids)

for case in results:
    if case.error:
        print(f"case {case.case_id:2d} sigma={case.sigma} lambda={case.lambdas} r={case.rate}: {case.error}")
        continue
    a2 = " ".join(f"{f.a2:+.4f}" for f in case.fits)
    print(f"case {case.case_id:2d} sigma={case.sigma} lambda={case.lambdas} r={case.rate}: a2 = {a2}")

a2 = np.array([f.a2 for c in results for f in c.fits])
print(f"\n{len(results)} cases, {int((a2 > 0).sum())}/{a2.size} positive smile coefficients")
