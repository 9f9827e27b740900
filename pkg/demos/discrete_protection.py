"""Which uncertain input is most worth learning before choosing a protection system?

Three protection systems with random resistances face a random maximum load.
We simulate the epistemic inputs, take the load's expectation analytically,
and then ask how much each input is worth knowing.
"""

import numpy as np

from infovalue import RandomSource, analyze, simulate, working_example_discrete
from infovalue.voi import conditional_expectations, cvppi_profile, prior_optimum_index

problem = working_example_discrete()
table = simulate(problem, 100_000, RandomSource(42))

# expected loss and expected utility per system
for k, label in enumerate(table.decisions):
    loss = table.outcomes[f"y_a{k + 1}"].mean()
    print(f"system {label}: expected loss {loss / 1e6:6.2f}e6  expected utility {table.utilities[:, k].mean() / 1e6:7.2f}e6")

rep = analyze(table)
print(f"\nbest system without more information: {rep.a_opt}")
print(f"EVPI {rep.evpi.value / 1e6:.2f}e6, EVPM {rep.evpm.value / 1e6:.2f}e6")

# information value, share of the EVPM, and how often the decision would flip
print("\nfactor        V   V/EVPM     DC")
for f in rep.factors:
    print(f"{f.name:>6} {f.V.value / 1e3:8.0f}e3 {100 * f.relative_V:6.1f}% {f.DC.value:6.3f}")

# where does learning M pay off?  the CVPPI is zero where the choice stays put
_, smoothers = conditional_expectations(table, "M")
profile = cvppi_profile(smoothers, prior_optimum_index(table))
m = np.linspace(5.0, 10.0, 11)
print("\nM      CVPPI")
for mi, v in zip(m, profile(m)):
    print(f"{mi:4.1f} {v / 1e3:8.0f}e3")
