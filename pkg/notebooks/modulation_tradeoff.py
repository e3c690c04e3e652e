"""
Finite constellations on a unit-CNR channel
===========================================

Compares the optimal EE of Gaussian and square-QAM inputs at ``mu = 1`` and
prints a coarse rate/power trade-off for each. Building the four MMSE tables
takes several seconds.
"""

import math

import numpy as np

from eeopt.mmse import Constellation, build_table, mercury_allocate, solve_mmse_ee

labels = ["gaussian", "64-qam", "16-qam", "4-qam"]
tables = {label: build_table(Constellation.from_label(label)) for label in labels}

# %%
for label, tab in tables.items():
    tr, a = solve_mmse_ee(tab, [1.0], 1.0)
    print(f"{label:>9}: EE* = {tr.ee:.6f}  p* = {a.sum_power:.4f}  r* = {a.sum_rate:.4f}")

# %%
# Lowering the cutoff spends more power; a discrete input stops gaining rate
# once it approaches log m.
lams = np.logspace(0, -4, 9)
for label in labels[1:]:
    rates = [mercury_allocate(tables[label], [1.0], lam).sum_rate for lam in lams]
    print(f"{label:>9}:", " ".join(f"{r:.3f}" for r in rates),
          f"| log m = {math.log(Constellation.from_label(label).order):.3f}")
