"""
One day of unit commitment, three ways
======================================

Exact MILP, the LP relaxation, and column generation from a zero dual.
"""

# %% a five-unit fleet and one seeded day of demand
import numpy as np
from ucdw import make_instances, solve_extensive_uc, run_column_generation, ColGenConfig
from ucdw.lp_core import build_uc_model, solve_lp

inst = make_instances(5, 24, 1, fleet_seed=11, demand_seed=2002)[0]
print("capacity", inst.capacity, "peak demand", inst.demand.max().round(1))

# %% the reference: branch and bound on the full model
exact = solve_extensive_uc(inst)
opt = exact.objective
print("optimum", round(opt, 2), "in", round(exact.seconds, 2), "s")

# %% the LP relaxation is cheap and weak
lp = solve_lp(build_uc_model(inst).problem)
print("LP relaxation / optimum", round(lp.objective / opt, 4))

# %% column generation: lower bound rises, heuristics push the upper bound down
res = run_column_generation(inst, config=ColGenConfig(gap_tolerance=0.0025))
for rec in res.log[::5]:
    print(f"iter {rec.iter:3d}  lb/opt {rec.lb / opt:7.4f}  ub/opt {rec.ub / opt:7.4f}")
print(res.status, "after", res.iterations, "iterations; final gap", round(res.gap, 4))

# %% the incumbent's commitment, one row per unit
on = np.array([s.on for s in res.best_solution.schedules], dtype=int)
for g, row in enumerate(on):
    print(g, "".join("#" if v else "." for v in row))
