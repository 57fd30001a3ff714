"""
Checking backprop against finite differences
============================================

Every network here is trained by hand-written backprop, so the first thing
worth seeing is that the gradients are right. We compare the analytic
gradient of the three training objectives against a central difference.
"""

import numpy as np

from roadfair.nn import Activation, make_rng, mlp
from roadfair.ratio import Normalization, RatioNetwork
from roadfair.trainers import adversary_objective, predictor_objective, ratio_objective

rng = make_rng(0)


def numeric_grad(value, param, step=1e-5):
    grad = np.zeros_like(param)
    flat, g = param.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = value()
        flat[i] = keep - step
        down = value()
        flat[i] = keep
        g[i] = (up - down) / (2 * step)
    return grad


def worst_error(value, net, grads):
    a = np.concatenate([g.ravel() for g in grads.parameters()])
    n = np.concatenate([numeric_grad(value, p).ravel() for p in net.parameters()])
    return np.max(np.abs(a - n)) / max(np.max(np.abs(a) + np.abs(n)), 1e-7)


# %%
# A small batch: 10 samples, 3 features, both sensitive groups present.
x = rng.normal(size=(10, 3))
y = rng.integers(0, 2, 10)
s = np.array([0, 1] * 5)

f = mlp(3, (6,), Activation.SIGMOID, rng)      # predictor
g = mlp(1, (5,), Activation.SIGMOID, rng)      # adversary, reads f(x)
h = RatioNetwork.create(3, (6,), rng)          # ratio network, reads (x, s)
scores = rng.uniform(0.1, 0.9, 10)  # stand-in predictor outputs

# %%
# The adversary loss J_s, the ratio objective J_r (its gradient passes through
# the per-group normalization), and the predictor objective J_f.
_, gs = adversary_objective(g, scores, y, s, "dp")
print("J_s", worst_error(lambda: adversary_objective(g, scores, y, s, "dp")[0], g, gs))

losses = rng.uniform(0.2, 1.5, 10)
_, gr = ratio_objective(h, x, s, losses, 0.5, Normalization.CONDITIONAL)
print("J_r", worst_error(lambda: ratio_objective(h, x, s, losses, 0.5, Normalization.CONDITIONAL)[0], h.head, gr))

r = h.weights(x, s).weights
_, gf = predictor_objective(f, g, x, y, s, 2.0, r)
print("J_f", worst_error(lambda: predictor_objective(f, g, x, y, s, 2.0, r)[0], f, gf))

# %%
# All three print relative errors around 1e-9 or below.
