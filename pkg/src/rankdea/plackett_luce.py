"""Plackett-Luce distribution over full rankings.

Rankings are rank vectors: ``ranks[n]`` is the 1-based position of item ``n``
(1 = best). Orderings are the inverse: ``ordering[k]`` is the 0-based index of
the item in position ``k + 1``.
"""

from __future__ import annotations

import itertools

import numpy as np

MAX_ENUMERATE = 8


def ordering_from_ranks(ranks) -> np.ndarray:
    """Invert rank vectors (1-D or stacked rows) into orderings."""
    r = np.asarray(ranks, dtype=int)
    order = np.argsort(r, axis=-1, kind="stable")
    if not np.array_equal(np.sort(r, axis=-1), np.broadcast_to(np.arange(1, r.shape[-1] + 1), r.shape)):
        raise ValueError("ranks must be a permutation of 1..N")
    return order


def ranks_from_ordering(ordering) -> np.ndarray:
    o = np.asarray(ordering, dtype=int)
    ranks = np.empty_like(o)
    np.put_along_axis(ranks, o, np.arange(1, o.shape[-1] + 1) + np.zeros_like(o), axis=-1)
    return ranks


def _suffix_logsumexp(w_ordered):
    # lse[k] = log sum_{s >= k} exp(w_ordered[s])
    return np.logaddexp.accumulate(w_ordered[::-1])[::-1]


def _check(worths, ranks):
    w = np.asarray(worths, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise ValueError("worths must be a vector of at least two entries")
    o = ordering_from_ranks(ranks)
    if o.shape != w.shape:
        raise ValueError("worths and ranks differ in length")
    return w, o


def log_probability(worths, ranks) -> float:
    """Log-likelihood of a full ranking under PL with the given worths."""
    w, o = _check(worths, ranks)
    return float(w.sum() - _suffix_logsumexp(w[o]).sum())


def score(worths, ranks) -> np.ndarray:
    """Gradient of :func:`log_probability` with respect to the worths.

    Item in position k gets ``1 - exp(w) * sum_{r<=k} 1 / S_r`` where
    ``S_r`` is the suffix sum of ``exp(w)`` from position r. The inner sum is
    accumulated in log space.
    """
    w, o = _check(worths, ranks)
    lse = _suffix_logsumexp(w[o])
    log_cum = np.logaddexp.accumulate(-lse)
    grad = np.empty_like(w)
    grad[o] = 1.0 - np.exp(w[o] + log_cum)
    return grad


def sample(worths, rng: np.random.Generator) -> np.ndarray:
    """Draw a ranking by sequential selection without replacement.

    Uses the Gumbel-max construction: sorting ``w + Gumbel noise`` in
    descending order has the same law as picking the best item with
    probability proportional to ``exp(w)``, then the next among the rest, etc.
    """
    w = np.asarray(worths, dtype=float)
    keys = w + rng.gumbel(size=w.shape)
    return ranks_from_ordering(np.argsort(-keys, kind="stable"))


def enumerate_pmf(worths) -> dict[tuple[int, ...], float]:
    """Probability of every ordering (tuple of 0-based items, best first).

    Brute-force reference for small N (at most 8 items).
    """
    w = np.asarray(worths, dtype=float)
    n = w.size
    if n > MAX_ENUMERATE:
        raise ValueError(f"enumeration limited to N <= {MAX_ENUMERATE}, got {n}")
    if n < 2:
        raise ValueError("need at least two items")
    weights = np.exp(w - w.max())
    pmf = {}
    for perm in itertools.permutations(range(n)):
        tail = np.cumsum(weights[list(perm)][::-1])[::-1]
        pmf[perm] = float(np.prod(weights[list(perm)] / tail))
    return pmf
