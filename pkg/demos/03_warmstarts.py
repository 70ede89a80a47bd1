"""
Warmstarting the duals
======================

A small network trained on the sampled Lagrangian bound, next to the LP
duals, a nearest-neighbour lookup and the zero start.  Bounds are scaled by
the exact optimum.
"""

# %%
import numpy as np
from ucdw import make_instances, solve_extensive_uc, compute_lower_bound
from ucdw import policy, baselines
from ucdw.pricing import DualPoint

train = make_instances(5, 24, 60, fleet_seed=11, demand_seed=1001)
test = make_instances(5, 24, 5, fleet_seed=11, demand_seed=2002)
opts = [solve_extensive_uc(i).objective for i in test]

# %% a short training run (the benchmark uses 2000 steps)
net = policy.MlpPolicy.init(train[0].generators, 24, hidden=(64, 64, 64), seed=0)
fit = policy.train(net, train[:50], train[50:], policy.TrainConfig(steps=600, eval_every=100, lr=1e-3),
                   callback=lambda s, m, lr: print("step", s, "eval bound", round(m, 1)))

# %% a handful of solved training days for the nearest-neighbour lookup
ds = baselines.build_dataset(train[:8], max_iterations=80)
print(len(ds), "stored duals")

# %%
starts = {
    "coldstart": lambda i: DualPoint.zeros(24),
    "lpr": lambda i: baselines.lpr_dual(i)[0],
    "nearest": lambda i: baselines.nearest_neighbour_dual(ds, i),
    "network": lambda i: fit.policy.predict(i),
}
for name, f in starts.items():
    scaled = [compute_lower_bound(i, f(i)) / o for i, o in zip(test, opts)]
    print(f"{name:10s} mean lb/opt {np.mean(scaled):.4f}")
