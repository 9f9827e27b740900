"""Choosing a design level on a continuum.

The decision is a resistance multiplier ``a`` in [4, 20].  The decision is
drawn at random alongside the inputs, a 2-d smoother estimates expected
utility on (input, a), and its maximizer per input value gives the
conditionally optimal design.
"""

import numpy as np

from infovalue import RandomSource, simulate, working_example_continuous
from infovalue.continuous import analyze_continuous

problem = working_example_continuous()
table = simulate(problem, 100_000, RandomSource(42))
rep = analyze_continuous(table, src=RandomSource(42, 1))

print(f"prior optimum a = {rep.a_opt:.2f}, expected cost {-rep.expected_utilities[0] / 1e6:.2f}e6")
print(f"EVPM {rep.evpm.value / 1e6:.2f}e6")
print("\nfactor        V   V/EVPM   Sobol'")
for f in rep.factors:
    print(f"{f.name:>6} {f.V.value / 1e3:8.0f}e3 {100 * f.relative_V:6.1f}% {100 * f.sobol_first.value:6.1f}%")

# the design one would pick after learning M
dmap = rep.maps["M"]
print("\nM      a_opt|M")
for m in np.linspace(5.5, 9.5, 9):
    print(f"{m:4.1f} {dmap(np.array([m]))[0]:8.2f}")
