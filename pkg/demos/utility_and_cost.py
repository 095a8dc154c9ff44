"""Compare selection mechanisms on HEPTH-shaped data and show how cost scales.

Run with ``python3 demos/utility_and_cost.py``; takes under a minute.
"""

import numpy as np

from dpselect.bench import (BenchConfig, bits_required, fit_rounds_model, run_cost_sweep,
                            run_utility_sweep, synthetic_dataset, trunc_bits_for_alpha)

hist = synthetic_dataset("hepth", seed=0)
top2 = np.sort(hist.counts)[-2:]
print(f"HEPTH-shaped histogram: d={hist.d}, max={top2[1]}, runner-up={top2[0]}, "
      f"{bits_required(int(hist.counts.max()))} bits")

c = trunc_bits_for_alpha(0.125, int(hist.counts.max()))
print(f"alpha=0.125 allows dropping {c} bits, leaving {bits_required(int(hist.counts.max()) >> c)}")

print("\nmean error over 1000 runs")
bc = BenchConfig(epsilons=[0.02, 0.06, 0.1, 0.18], runs=1000,
                 mechanisms=["ours-central", "ours-ideal-functionality", "permute-and-flip",
                             "exponential", "secure-agg", "uniform"])
rows = run_utility_sweep(bc, hist)
eps_grid = sorted(bc.epsilons)
print(f"{'mechanism':26s}" + "".join(f"{e:>10}" for e in eps_grid))
for mech in sorted(bc.mechanisms):
    errs = {r.epsilon: r.mean_error for r in rows if r.mechanism == mech}
    print(f"{mech:26s}" + "".join(f"{errs[e]:>10.2f}" for e in eps_grid))

print("\nonline cost of the protocol (3 servers)")
sweep = run_cost_sweep([16, 256, 1024], [5, 10, 20])
print(f"{'d':>6}{'a':>4}{'online kB':>12}{'rounds':>8}")
for r in sweep.rows:
    print(f"{r.d:>6}{r.a:>4}{r.online_bytes / 1000:>12.1f}{r.rounds:>8}")
c1, c2, dev = fit_rounds_model([(r.d, r.a, r.rounds) for r in sweep.rows])
print(f"rounds ~ {c1:.2f} log2(d) (log2(a) + {c2:.2f}), worst deviation {dev:.0%}")
