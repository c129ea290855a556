"""Independent reference computations used by several test modules."""

import itertools

import numpy as np


def ratio_ccr(x, y):
    """Single input/output CCR score: productivity over best productivity."""
    r = np.asarray(y, dtype=float) / np.asarray(x, dtype=float)
    return r / r.max()


def two_input_multiplier(X, n, exclude_self=False):
    """Exact CCR/AP score for two inputs and one unit output per DMU.

    With every output equal to one the multiplier program reduces to
    ``max_s min_m (v(s) . x_m) / (v(s) . x_n)`` over input weights
    ``v(s) = (s, 1 - s)``. Each ratio is linear-fractional in ``s``, so the
    maximum of their lower envelope sits at an endpoint or at a crossing of
    two ratios. All candidates are enumerated.
    """
    X = np.asarray(X, dtype=float)
    others = [m for m in range(len(X)) if not (exclude_self and m == n)]

    def envelope(s):
        v = np.array([s, 1.0 - s])
        return min(X[m] @ v for m in others) / (X[n] @ v)

    # ratio_m(s) = ratio_k(s)  <=>  (x_m - x_k) . v(s) = 0, linear in s
    candidates = [0.0, 1.0]
    for m, k in itertools.combinations(others, 2):
        d = X[m] - X[k]
        denom = d[0] - d[1]
        if abs(denom) > 1e-15:
            s = -d[1] / denom
            if 0.0 <= s <= 1.0:
                candidates.append(s)
    return max(envelope(s) for s in candidates)


def random_cross_section(rng, n=10, i=2, j=2):
    from rankdea.dea import CrossSection

    return CrossSection(rng.uniform(0.5, 5.0, (n, i)), rng.uniform(0.5, 5.0, (n, j)))


# Three DMUs with one unit of output. DMU 1 is twice as lean as DMU 2 in both
# inputs; DMU 3 uses a balanced mix. Against DMU 1, DMU 3 looks better than
# DMU 2; once DMU 1 is gone DMU 2 becomes efficient and overtakes DMU 3.
FLIP_INPUTS = [[0.5, 1.5], [1.0, 3.0], [2.0, 2.0]]
