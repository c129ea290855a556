"""CCR, super-efficiency (AP) and universal (H) DEA scores under CRS.

All three models are solved in their input-oriented multiplier form. The H
scores come from their own linear program; the closed-form link to AP scores
(``ap_to_h``/``h_to_ap``) is kept separate so it can be used as a cross-check.
"""

from __future__ import annotations

import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .exceptions import DeaError, EfficiencyWarning, TieWarning, ValidationError
from .lp import LinearProgram, LpStatus, SimplexOptions, solve

if TYPE_CHECKING:
    from .data import PanelDataset

MODELS = ("ccr", "ap", "h", "log")

#: Stand-in for an unbounded super-efficiency score.
AP_UNBOUNDED = sys.float_info.max

TIE_TOL = 1e-9


@dataclass
class CrossSection:
    """Inputs (N x I) and outputs (N x J) of N DMUs in one period."""

    inputs: np.ndarray
    outputs: np.ndarray
    dmu_labels: list = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if self.inputs.ndim != 2 or self.outputs.ndim != 2:
            raise ValidationError("inputs and outputs must be 2-D (DMU x variable)")
        n = self.inputs.shape[0]
        if self.outputs.shape[0] != n:
            raise ValidationError("inputs and outputs disagree on the number of DMUs")
        if n < 2:
            raise ValidationError("at least two DMUs are required")
        if not np.all(np.isfinite(self.inputs)) or not np.all(np.isfinite(self.outputs)):
            raise ValidationError("inputs and outputs must be finite")
        if np.any(self.inputs <= 0):
            raise ValidationError("all inputs must be strictly positive")
        if np.any(self.outputs < 0):
            raise ValidationError("outputs must be nonnegative")
        if np.any(self.outputs.max(axis=1) <= 0):
            raise ValidationError("every DMU needs at least one strictly positive output")
        if self.dmu_labels is None:
            self.dmu_labels = list(range(n))
        elif len(self.dmu_labels) != n:
            raise ValidationError("one label per DMU is required")

    @property
    def n_dmus(self) -> int:
        return self.inputs.shape[0]

    def without(self, n: int) -> "CrossSection":
        keep = np.arange(self.n_dmus) != n
        return CrossSection(
            self.inputs[keep], self.outputs[keep], [l for i, l in enumerate(self.dmu_labels) if i != n]
        )

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        # CRS multiplier scores are invariant to column rescaling; unit maxima
        # keep the LP well inside the solver's absolute tolerances.
        x_scale = self.inputs.max(axis=0)
        y_scale = self.outputs.max(axis=0)
        y_scale[y_scale <= 0] = 1.0
        return self.inputs / x_scale, self.outputs / y_scale


def _build_program(X, Y, n, model) -> LinearProgram:
    N, I = X.shape
    J = Y.shape[1]
    peers = np.ones(N, dtype=bool)
    if model != "ccr":
        peers[n] = False
    frontier = np.hstack([Y[peers], -X[peers]])

    if model in ("ccr", "ap"):
        # variables (u, v)
        c = np.concatenate([Y[n], np.zeros(I)])
        A = np.vstack([np.concatenate([np.zeros(J), X[n]]), frontier])
        senses = ["="] + ["<="] * frontier.shape[0]
        b = np.concatenate([[1.0], np.zeros(frontier.shape[0])])
        return LinearProgram(c, A, senses, b)

    # H model, variables (delta, u, v). delta >= -1 never binds: delta = -1,
    # u = v = 0 is feasible with objective 0 <= optimum.
    c = np.concatenate([[1.0], np.zeros(J + I)])
    A = np.vstack(
        [
            np.concatenate([[-1.0], Y[n], np.zeros(I)]),
            np.concatenate([[1.0], np.zeros(J), X[n]]),
            np.hstack([np.zeros((frontier.shape[0], 1)), frontier]),
        ]
    )
    senses = [">=", "<="] + ["<="] * frontier.shape[0]
    b = np.concatenate([[1.0, 1.0], np.zeros(frontier.shape[0])])
    lb = np.concatenate([[-1.0], np.zeros(J + I)])
    return LinearProgram(c, A, senses, b, lb)


def solve_dmu(cs: CrossSection, n: int, model: str, options: SimplexOptions | None = None,
              period=None) -> tuple[float, LpStatus]:
    """Score DMU ``n`` under ``model`` ("ccr", "ap" or "h").

    Returns ``(score, status)``. An unbounded AP program yields
    ``(AP_UNBOUNDED, LpStatus.UNBOUNDED)`` with an :class:`EfficiencyWarning`;
    any other non-optimal status raises :class:`DeaError`.
    """
    if model not in ("ccr", "ap", "h"):
        raise ValueError(f"unknown DEA model {model!r}")
    if not 0 <= n < cs.n_dmus:
        raise IndexError(f"DMU index {n} out of range")
    X, Y = cs.normalized()
    sol = solve(_build_program(X, Y, n, model), options)
    label = cs.dmu_labels[n]
    if sol.status is LpStatus.OPTIMAL:
        value = sol.objective_value
        return (1.0 + value if model == "h" else value), sol.status
    if sol.status is LpStatus.UNBOUNDED and model == "ap":
        warnings.warn(
            f"super-efficiency program unbounded for DMU {label!r}"
            + (f" in period {period!r}" if period is not None else "")
            + "; score set to the unbounded sentinel",
            EfficiencyWarning,
            stacklevel=2,
        )
        return AP_UNBOUNDED, sol.status
    raise DeaError(f"LP solve failed with status {sol.status.value}", model=model,
                   dmu=label, period=period, status=sol.status)


def ccr_score(cs: CrossSection, n: int) -> float:
    return solve_dmu(cs, n, "ccr")[0]


def ap_score(cs: CrossSection, n: int) -> float:
    return solve_dmu(cs, n, "ap")[0]


def h_score(cs: CrossSection, n: int) -> float:
    return solve_dmu(cs, n, "h")[0]


def cross_section_scores(cs: CrossSection, model: str) -> np.ndarray:
    """Scores of every DMU in ``cs``; ``model`` may also be "log"."""
    if model == "log":
        return np.array([log_score(ap_score(cs, n)) for n in range(cs.n_dmus)])
    return np.array([solve_dmu(cs, n, model)[0] for n in range(cs.n_dmus)])


def ap_to_h(theta_ap):
    """Map super-efficiency scores to universal scores, ``2a / (1 + a)``."""
    a = np.asarray(theta_ap, dtype=float)
    if np.any(a < 0):
        raise ValueError("super-efficiency scores are nonnegative")
    with np.errstate(divide="ignore"):
        # 2 / (1 + 1/a) avoids overflow for the sentinel; a = 0 maps to 0.
        h = np.where(a >= AP_UNBOUNDED, 2.0, np.where(a == 0, 0.0, 2.0 / (1.0 + 1.0 / a)))
    return float(h) if h.ndim == 0 else h


def h_to_ap(theta_h):
    """Inverse of :func:`ap_to_h`; ``theta_h == 2`` maps to the sentinel."""
    h = np.asarray(theta_h, dtype=float)
    if np.any(h < 0) or np.any(h > 2):
        raise ValueError("universal scores lie in [0, 2]")
    with np.errstate(divide="ignore"):
        a = np.where(h >= 2.0, AP_UNBOUNDED, h / (2.0 - h))
    return float(a) if a.ndim == 0 else a


def log_score(theta_ap):
    """Natural log of the super-efficiency score (-inf, with a warning, at 0)."""
    a = np.asarray(theta_ap, dtype=float)
    if np.any(a < 0):
        raise ValueError("super-efficiency scores are nonnegative")
    if np.any(a == 0):
        warnings.warn("log of a zero efficiency score is -inf", EfficiencyWarning, stacklevel=2)
    with np.errstate(divide="ignore"):
        out = np.log(a)
    return float(out) if out.ndim == 0 else out


def rank_cross_section(scores: Sequence[float], tie_tol: float = TIE_TOL) -> np.ndarray:
    """Rank DMUs by descending score; rank 1 is the most efficient.

    Scores within ``tie_tol`` (relative, floor 1) of each other are treated
    as tied and ordered by ascending DMU index, with a :class:`TieWarning`.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise ValueError("need a vector of at least two scores")
    if np.any(np.isnan(s)):
        raise ValueError("cannot rank missing scores")
    order = np.argsort(-s, kind="stable")
    # Insertion pass so near-equal scores fall back to index order.
    order = list(order)
    for i in range(1, len(order)):
        j = i
        while j > 0 and _close(s[order[j - 1]], s[order[j]], tie_tol) and order[j - 1] > order[j]:
            order[j - 1], order[j] = order[j], order[j - 1]
            j -= 1
    tied = [
        (order[i], order[i + 1])
        for i in range(len(order) - 1)
        if _close(s[order[i]], s[order[i + 1]], tie_tol)
    ]
    if tied:
        groups = sorted({int(n) for pair in tied for n in pair})
        warnings.warn(f"tied scores for DMUs {groups}; broken by index", TieWarning, stacklevel=2)
    ranks = np.empty(s.size, dtype=int)
    ranks[np.asarray(order)] = np.arange(1, s.size + 1)
    return ranks


def _close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@dataclass
class EfficiencyPanel:
    """N x T scores of one model."""

    model_tag: str
    scores: np.ndarray
    statuses: np.ndarray
    dmu_labels: list = field(default_factory=list)
    periods: list = field(default_factory=list)

    @property
    def failures(self) -> list[tuple]:
        """(dmu, period, status) for every cell without a usable score."""
        bad = np.argwhere(np.isnan(self.scores))
        return [(self.dmu_labels[n], self.periods[t], self.statuses[n, t]) for n, t in bad]

    @property
    def unbounded(self) -> list[tuple]:
        hits = np.argwhere(self.statuses == LpStatus.UNBOUNDED.value)
        return [(self.dmu_labels[n], self.periods[t]) for n, t in hits]


def _score_cell(args):
    cs, n, model, period = args
    try:
        score, status = solve_dmu(cs, n, model, period=period)
        return score, status.value
    except DeaError as exc:
        return np.nan, exc.status.value if exc.status is not None else "Error"


def efficiency_panel(data: "PanelDataset", model_tag: str, threads: int = 1) -> EfficiencyPanel:
    """Score every DMU in every period independently.

    Solver failures are recorded per cell (score NaN, status kept) rather
    than raised. ``model_tag="log"`` is the natural log of the AP panel.
    """
    model_tag = model_tag.lower()
    if model_tag not in MODELS:
        raise ValueError(f"unknown model {model_tag!r}; expected one of {MODELS}")
    lp_model = "ap" if model_tag == "log" else model_tag
    N, T = data.n_dmus, data.n_periods
    tasks = []
    for t in range(T):
        cs = data.cross_section(t)
        tasks.extend((cs, n, lp_model, data.periods[t]) for n in range(N))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_score_cell, tasks))
    else:
        results = [_score_cell(task) for task in tasks]

    scores = np.array([r[0] for r in results], dtype=float).reshape(T, N).T
    statuses = np.array([r[1] for r in results], dtype=object).reshape(T, N).T
    if model_tag == "log":
        if np.any(scores == 0):
            warnings.warn("zero AP scores give -inf log scores", EfficiencyWarning, stacklevel=2)
        with np.errstate(divide="ignore"):
            scores = np.log(scores)
    return EfficiencyPanel(model_tag, scores, statuses, list(data.dmu_labels), list(data.periods))


@dataclass
class RankingSeries:
    """T full rankings of the same N DMUs, one row per period (rank 1 = best)."""

    ranks: np.ndarray
    dmu_labels: list = None
    periods: list = None

    def __post_init__(self):
        from .plackett_luce import ordering_from_ranks

        self.ranks = np.atleast_2d(np.asarray(self.ranks, dtype=np.int64))
        # validates every row as a permutation of 1..N
        self.orderings = ordering_from_ranks(self.ranks)
        T, N = self.ranks.shape
        if self.dmu_labels is None:
            self.dmu_labels = list(range(N))
        if self.periods is None:
            self.periods = list(range(1, T + 1))
        if len(self.dmu_labels) != N or len(self.periods) != T:
            raise ValueError("labels do not match the ranking dimensions")

    @property
    def n_dmus(self) -> int:
        return self.ranks.shape[1]

    @property
    def n_periods(self) -> int:
        return self.ranks.shape[0]

    def subset(self, periods) -> "RankingSeries":
        idx = list(periods)
        return RankingSeries(self.ranks[idx], list(self.dmu_labels), [self.periods[i] for i in idx])


def rank_panel(panel: EfficiencyPanel, tie_tol: float = TIE_TOL) -> RankingSeries:
    """Rank DMUs within every period of an efficiency panel."""
    if np.any(np.isnan(panel.scores)):
        raise DeaError(f"cannot rank a panel with failed cells: {panel.failures}", model=panel.model_tag)
    ranks = np.stack([rank_cross_section(panel.scores[:, t], tie_tol) for t in range(panel.scores.shape[1])])
    return RankingSeries(ranks, list(panel.dmu_labels), list(panel.periods))
