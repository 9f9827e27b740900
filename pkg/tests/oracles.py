"""Independent reference computations used by the tests.

Nothing here calls the estimators under test: discrete problems are solved by
exhaustive enumeration of the joint distribution.
"""

import itertools

import numpy as np

from infovalue.model import SampleTable


def random_discrete_problem(rng, max_levels=4, max_decisions=4, max_factors=3):
    """Independent discrete factors with random level probabilities and a utility table."""
    n_f = int(rng.integers(1, max_factors + 1))
    levels = [int(rng.integers(2, max_levels + 1)) for _ in range(n_f)]
    probs = [rng.dirichlet(np.full(L, 3.0)) for L in levels]
    n_a = int(rng.integers(2, max_decisions + 1))
    U = rng.normal(0.0, 1.0, size=tuple(levels) + (n_a,))
    return {"levels": levels, "probs": probs, "U": U}


def _joint(problem):
    p = problem["probs"][0]
    for q in problem["probs"][1:]:
        p = np.multiply.outer(p, q)
    return p


def enumerate_voi(problem, factors):
    """Exact information value, EVPI and decision-change probability of a factor set."""
    U, p = problem["U"], _joint(problem)
    n_f = U.ndim - 1
    eu = np.tensordot(p, U, axes=n_f)
    a_opt = int(np.argmax(eu))
    evpi = float(np.sum(p * U.max(axis=-1)) - eu[a_opt])
    other = tuple(i for i in range(n_f) if i not in factors)
    pv = p.sum(axis=other) if other else p
    # E[u | x_v, a] * p(x_v)
    wu = (p[..., None] * U).sum(axis=other) if other else p[..., None] * U
    cond = wu / pv[..., None]
    best = cond.max(axis=-1)
    V = float(np.sum(pv * best) - eu[a_opt])
    dc = float(np.sum(pv * (np.argmax(cond, axis=-1) != a_opt)))
    return {"V": V, "EVPI": evpi, "DC": dc, "a_opt": a_opt}


def sample_problem(problem, n, rng):
    """Monte Carlo sample table of a discrete problem; factor ``X<i>`` takes values ``0..L-1``."""
    idx = [rng.choice(len(q), size=n, p=q) for q in problem["probs"]]
    U = problem["U"][tuple(idx)]
    return SampleTable({f"X{i + 1}": v.astype(float) for i, v in enumerate(idx)}, U)


def enumeration_table(levels, reps=1):
    """Every joint level combination of equiprobable factors, each repeated ``reps`` times."""
    grid = np.array(list(itertools.product(*[range(L) for L in levels])), dtype=float)
    return np.repeat(grid, reps, axis=0)
