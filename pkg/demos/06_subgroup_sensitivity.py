"""
How much does the subgroup definition matter?
=============================================

Worst-1-DI depends on how the population is cut. This evaluates one trained
model under twelve definitions: age bins of width 5, 10, 15 and 20 years,
on everyone, then on gender=0 only, then on gender=1 only.
"""

from roadfair import harness
from roadfair.data import local_bias_config, split, standardize, synthesize
from roadfair.nn import make_rng
from roadfair.trainers import TrainConfig, train

tr, te = split(synthesize(local_bias_config(n=6000, seed=6)), 0.3, make_rng(6))
tr, scaler = standardize(tr)
model = train(tr, TrainConfig(algorithm="road", lambda_g=3.0, tau=0.5, epochs=60, lr_f=0.05, lr_g=0.5, lr_r=0.05))
model.standardizer = scaler

# %%
# Definitions with no usable subgroup are listed with a note instead of a
# value; nothing is silently skipped.
for row in harness.subgroup_sensitivity(model, te, min_size=20):
    value = "undefined" if row["worst_1_di"] is None else f"{row['worst_1_di']:.3f}"
    print(f"def {row['definition']:>2}  width {row['bin_width']:>4g}  {row['population']:<9} "
          f"{row['n_subgroups']:>2} subgroups  worst-1 {value}")
