"""A small users sweep through the experiment harness.

Same machinery as ``cfgbd run``: rows are written to CSV along with
per-algorithm median and quartile files for plotting. The output root
defaults to ``$CFGBD_OUTPUT_ROOT`` (or ``./results``).

    python3 demos/03_small_sweep.py
"""

import numpy as np

from cellfree_gbd.harness import ExperimentSpec, resolve_output, run_experiment, write_outputs

spec = ExperimentSpec(
    name="demo-users",
    aps=24,
    groups=4,
    seeds=range(5),
    algorithms=("GPGA-EBSA", "GPGA-GFSA", "BCGA", "GALE_S", "NON_GROUPING"),
    axis="users",
    values=(8, 12, 16, 20),
)
rows = run_experiment(spec)
out = resolve_output(spec)
write_outputs(spec, rows, out)

print("median total power (dBm) over 5 seeds")
print(f"{'users':>6}" + "".join(f"{a:>14}" for a in spec.algorithms))
for v in spec.values:
    cells = []
    for a in spec.algorithms:
        p = [r.power_dbm for r in rows if r.sweep == v and r.algorithm == a]
        cells.append(f"{np.median(p):14.2f}")
    print(f"{v:>6}" + "".join(cells))
print(f"\nrows and plot data in {out}")
