"""
A small lambda x tau sweep and its Pareto front
===============================================

Sweeps are resumable JSON-lines files. Here we run a coarse grid, keep the
runs whose global DI fits a budget, and extract the (worst-1-DI, accuracy)
front. The same flow is available as ``python -m roadfair sweep``.
"""

import os
import tempfile
import warnings

from roadfair import harness
from roadfair.data import SubgroupSpec, local_bias_config, split, standardize, synthesize
from roadfair.nn import make_rng
from roadfair.trainers import TrainConfig

warnings.simplefilter("ignore", RuntimeWarning)

ds = synthesize(local_bias_config(n=3000, seed=2))
tr, te = split(ds, 0.3, make_rng(2))
tr, scaler = standardize(tr)
te = scaler.apply(te)

spec = harness.SweepSpec(
    lambdas=(0.0, 1.0, 3.0),
    taus=(0.1, 1.0),
    algorithms=("globalfair", "road"),
    seeds=(0,),
    base=TrainConfig(epochs=20, lr_f=0.05, lr_g=0.5, lr_r=0.05),
)
print(spec.size(), "runs")

out = os.path.join(tempfile.mkdtemp(), "sweep.jsonl")
records = harness.run_sweep(spec, tr, te, SubgroupSpec("age", 10, ("gender",), 30), out, workers=2)
for r in records:
    print(f"{r.run_id:<40} DI {r.report.global_di:.3f}  worst-1 {r.report.worst_1_di:.3f}  "
          f"acc {r.report.accuracy:.3f}")

# %%
# Running it again resumes: every run is already in the file.
print("second pass ran", len(harness.run_sweep(spec, tr, te, SubgroupSpec("age", 10, ("gender",), 30), out)))

# %%
# The front under a loose DI budget (this grid is too short to train
# strongly fair models), and the CSV a plotting tool would read.
front = harness.pareto_report(harness.load_records(out), constraint_di=0.15)
for p in front:
    print(p)
harness.emit_plotdata(front, "pareto_xy", out.replace(".jsonl", "_pareto.csv"))
harness.emit_plotdata(harness.load_records(out), "tau_curve", out.replace(".jsonl", "_tau.csv"))
print(open(out.replace(".jsonl", "_tau.csv")).read())
