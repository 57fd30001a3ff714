"""
Closed-form sample weights
==========================

Given per-sample adversary losses L and a temperature tau, the weights that
maximize ``-mean(r L) - tau mean(r log r)`` with ``mean(r) = 1`` are a
softmax of ``-L / tau``. Low adversary loss means the sensitive attribute is
easy to recover there, so those samples get the most weight.
"""

import numpy as np
from scipy.optimize import minimize

from roadfair.ratio import Normalization, broad_weights, fully_fair_weight_analysis, inner_objective

losses = np.array([0.2, 0.5, 0.7, 0.7, 1.4])
for tau in (0.1, 0.5, 5.0):
    r = broad_weights(losses, None, tau, Normalization.GLOBAL).weights
    print(f"tau={tau:<4} r={np.round(r, 3)}")

# %%
# A generic constrained solver lands on the same optimum.
tau = 0.5
res = minimize(lambda r: -inner_objective(r, losses, tau), np.ones(5), method="SLSQP",
               bounds=[(1e-9, 5)] * 5, constraints=[{"type": "eq", "fun": lambda r: r.mean() - 1}])
closed = broad_weights(losses, None, tau, Normalization.GLOBAL).weights
print("solver", np.round(res.x, 4))
print("closed", np.round(closed, 4))

# %%
# Conditional normalization: weights average to one inside each sensitive
# group, so the reweighting never changes how much each group counts overall.
s = np.array([0, 0, 1, 1, 1])
r = broad_weights(losses, s, tau).weights
print("group means", r[s == 0].mean(), r[s == 1].mean())

# %%
# When the adversary only knows the prior P(S=1) = 0.75, conditional weights
# are all one while a single global pool tilts towards the majority group.
print(fully_fair_weight_analysis(0.75, 0.5))
