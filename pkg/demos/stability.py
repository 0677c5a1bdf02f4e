"""Step-size condition of the time march and error propagation.

Run: python demos/stability.py
"""
from mmgbm.model import Contract, Grid, reference_model
from mmgbm.pricer import min_steps_for_stability, perturbation_experiment, stability_check

model = reference_model()
contract = Contract(1.0, 0.1)
grid = Grid(51, 400, 1.5)

print(stability_check(model, grid, 0.1).summary())
print("fewest stable time steps for T=0.1:", min_steps_for_stability(model, 0.1))
print("a long maturity on the same step:", stability_check(model, Grid(51, 400, 1.5), 1.0).summary())

# a 1e-6 bump at one level never grows; bumps at every level stay under (e^(bT)-1) delta
res = perturbation_experiment(model, contract, grid, level=25, delta=1e-6)
print(f"isolated bump at level 25: max effect {res.isolated_max_error:.2e}")
print(f"bump at every level: max effect {res.all_levels_error:.2e} <= {res.bound:.2e}")
