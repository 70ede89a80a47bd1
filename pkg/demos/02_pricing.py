"""
Pricing one generator
=====================

The per-unit subproblem: pick on/off periods and outputs minimizing reduced
cost at a given dual.  The interval DP is checked against brute force.
"""

# %%
import numpy as np
from ucdw.pricing import DualPoint, solve_pricing, brute_force_pricing
from ucdw.uc_model import generate_fleet

gen = generate_fleet(3, 11)[0]
print(gen)

# %% a dual with an evening price spike
n_T = 6
y = DualPoint(np.array([5.0, 5.0, 10.0, 80.0, 90.0, 20.0]), np.zeros(n_T))
res = solve_pricing(gen, y, n_T)
print("on   ", res.schedule.on.astype(int))
print("power", res.schedule.power.round(2))
print("reduced cost", round(res.reduced_objective, 4))

# %% same answer by enumerating every feasible on/off pattern
ref = brute_force_pricing(gen, y, n_T)
print("brute force ", round(ref.reduced_objective, 4))

# %% at y = 0 nothing is worth switching on
print(solve_pricing(gen, DualPoint.zeros(n_T), n_T).schedule.on.astype(int))
