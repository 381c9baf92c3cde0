"""Watch one search trial unfold, round by round.

Five cells, one hiding an anomaly. Observations from the anomalous cell
follow a fast exponential, normal cells a slow one. The policy probes one
cell per round and stops once the leading sum-LLR outruns the runner-up by
-log c. Run:

    python3 demos/single_target_race.py
"""

import math

from anomsearch import ExperimentConfig, Exponential, run_trial

cfg = ExperimentConfig(
    num_cells=5,
    probes_per_round=1,
    policy="dgf",
    model=Exponential(0.5, 10.0),
    neg_log_c=(4.0,),
    trials=1,
    seed=12,
)

trace = []
result = run_trial(cfg, cost=math.exp(-4.0), trial_index=0, trace=trace)

print(f"true target: cell {result.true_hypothesis[0]}")
print(f"{'round':>5}  {'probed':>6}  {'llr':>8}")
sums = [0.0] * cfg.num_cells
model = cfg.model
for n, (cells, obs) in enumerate(trace, start=1):
    for cell, y in obs.items():
        step = model.llr(y)
        sums[cell] += step
        print(f"{n:>5}  {cell:>6}  {step:>8.3f}   sums="
              + " ".join(f"{s:7.2f}" for s in sums))

print(f"\nstopped after {result.tau} rounds, "
      f"declared cell {result.decision[0]} "
      f"({'correct' if result.correct else 'wrong'})")
