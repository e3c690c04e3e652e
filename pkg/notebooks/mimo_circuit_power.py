"""
MIMO energy efficiency versus per-antenna circuit power
=======================================================

Rayleigh MIMO links behind the generic base-station power model. Each link
uses 10^4 channel draws with a fixed seed, so curves share their draws across
the sweep and the comparisons are not blurred by independent noise.
"""

import numpy as np

from eeopt.ergodic import mimo_scenario, solve_parallel_fading
from eeopt.powermodel import GenericBsModel, dbm_per_hz_to_watts, to_mu_scale

gain = 1.0 / dbm_per_hz_to_watts(-104.5)
links = [(1, 1), (2, 2), (2, 1)]
scenarios = {k: mimo_scenario(*k, gain, n_samples=10_000, seed=1) for k in links}

# %%
print(f"{'P_c [W]':>8}" + "".join(f"{f'{t}x{r}':>14}" for t, r in links))
for p_c in np.linspace(0.0, 40.0, 9):
    cells = []
    for n_t, n_r in links:
        ms = to_mu_scale(GenericBsModel(n_a=n_t, p_c=p_c))
        sol = solve_parallel_fading(scenarios[n_t, n_r], ms.mu)
        cells.append(f"{ms.conversion * sol.ee / 1e3:14.3f}")
    print(f"{p_c:8.1f}" + "".join(cells))

# %%
# Values are kbit/J. Two transmit antennas with one receiver only pay off
# while the per-antenna circuit power is small.
