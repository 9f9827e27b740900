"""How much are n observed annual maxima worth?

Data are n_s Gumbel draws around the unknown location M.  Their sufficient
statistic sum(exp(-s)) stands in for the full data set, so the value of the
data is the information value of a single scalar.  As n_s grows it climbs
towards the value of knowing M exactly.
"""

import numpy as np

from infovalue import RandomSource, evppi, simulate, working_example_discrete
from infovalue.voi import gumbel_location_sampler, gumbel_sufficient_statistic, sample_information_value

table = simulate(working_example_discrete(), 100_000, RandomSource(42))
V_M = evppi(table, "M")
print(f"value of knowing M: {V_M.value / 1e3:.0f}e3 +/- {V_M.se / 1e3:.0f}e3")

src = RandomSource(42, 2)
print("\nn_s     V_Z   share of V_M")
for n_s in (0, 1, 2, 5, 10, 20, 50, 100):
    v = sample_information_value(table, "M", n_s, gumbel_location_sampler, gumbel_sufficient_statistic,
                                 src, transform=np.log)
    print(f"{n_s:4d} {v.value / 1e3:6.0f}e3 {100 * v.value / V_M.value:8.1f}%")
