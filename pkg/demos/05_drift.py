"""
Fairness under distribution drift
=================================

A drifted test set moves the age bands and shifts weight towards older,
more biased bands. We compare how a globally fair and a locally fair model
hold up.
"""

import warnings

from roadfair import harness
from roadfair.data import SubgroupSpec, local_bias_config, split, standardize, synthesize
from roadfair.nn import make_rng
from roadfair.trainers import TrainConfig, train

warnings.simplefilter("ignore", RuntimeWarning)

cfg = local_bias_config(n=6000, seed=4, drift_shift=0.5)
tr, te = split(synthesize(cfg), 0.3, make_rng(4))
tr, scaler = standardize(tr)
drifted = synthesize(local_bias_config(n=2000, seed=4, drift_shift=0.5), drifted=True)

# %%
# Models keep their training standardizer, so raw test sets can be passed in.
common = dict(lambda_g=3.0, epochs=60, lr_f=0.05, lr_g=0.5, lr_r=0.05, seed=4)
groups = SubgroupSpec("age", 10, (), 50)
for algo in ("globalfair", "road"):
    model = train(tr, TrainConfig(algorithm=algo, **common))
    model.standardizer = scaler
    reports = harness.drift_eval(model, {"in-distribution": te, "drifted": drifted}, groups)
    for name, rep in reports.items():
        print(f"{algo:<10} {name:<16} DI {rep.global_di:.3f}  EO gap {rep.eo_gap:.3f}  "
              f"worst-1 {rep.worst_1_di:.3f}  acc {rep.accuracy:.3f}")
