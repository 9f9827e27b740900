"""Value of information when what matters is a rare failure.

Only samples of the inputs that led to failure are available, plus the
prior failure probability.  Bayes' rule with a kernel density estimate turns
them into Pr(F | x) without running the model again.
"""

import math

import numpy as np
from scipy import stats

from infovalue import DistributionSpec, RandomSource, RareEventProblem, conditional_failure_probability, evppi_rare

rng = np.random.default_rng(0)

# failure when X1 + X2 > 3 for independent standard normals
x = rng.normal(size=(2_000_000, 2))
fail = x[x.sum(axis=1) > 3][:10_000]
p_f = stats.norm.sf(3 / math.sqrt(2))

# decision 1 keeps the system; decision 2 retrofits it at a cost and removes most of the risk
retrofit = rng.normal(size=(10_000, 2))
problem = RareEventProblem(
    p_f=[p_f, 0.1 * p_f],
    failure_samples=[{"X1": fail[:, 0], "X2": fail[:, 1]}, {"X1": retrofit[:, 0], "X2": retrofit[:, 1]}],
    priors={"X1": DistributionSpec.normal(0, 1), "X2": DistributionSpec.normal(0, 1)},
    u_fail=[-100.0, -101.0],
    u_safe=[0.0, -1.0],
)

print("x1    Pr(F|x1)  exact")
for xi in np.linspace(0, 3, 7):
    p = conditional_failure_probability(problem, "X1", xi)
    print(f"{xi:4.1f} {float(p):8.4f} {stats.norm.cdf(xi - 3):8.4f}")

for name in ("X1", "X2"):
    v = evppi_rare(problem, name, src=RandomSource(1))
    print(f"V_{name} = {v.value:.4f} +/- {v.se:.4f}")
