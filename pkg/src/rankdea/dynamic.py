"""Score-driven dynamic Plackett-Luce model for panels of rankings.

Worths follow

    w[n, t] = omega[n] + sum_k beta[k] * z[n, k, t] + e[n, t]
    e[n, t] = phi * e[n, t-1] + alpha * grad_n(w[:, t-1] | R[t-1])

with ``e[:, 0] = 0`` and ``sum(omega) = 0``. The free parameter vector is
``(omega_1 .. omega_{N-1}, beta_1 .. beta_K, phi, alpha)``; ``omega_N`` is
implied by the zero-sum constraint, so every candidate the optimizer tries
satisfies it by construction.
"""

from __future__ import annotations

import dataclasses
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
import pandas as pd
from scipy import optimize, stats
from scipy.sparse.csgraph import connected_components

from . import plackett_luce as pl
from .dea import RankingSeries, rank_cross_section
from .exceptions import (ConvergenceError, EstimationWarning, IdentifiabilityError,
                         ValidationError)

logger = logging.getLogger(__name__)


@numba.njit(cache=True, nogil=True)
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@numba.njit(cache=True, nogil=True)
def _filter_kernel(omega, beta, phi, alpha, z, orderings):
    N, K, T = z.shape
    worths = np.empty((N, T))
    scores = np.empty((N, T))
    e = np.zeros(N)
    w = np.empty(N)
    lse = np.empty(N)
    loglik = 0.0
    for t in range(T):
        for n in range(N):
            acc = omega[n] + e[n]
            for k in range(K):
                acc += beta[k] * z[n, k, t]
            if not np.isfinite(acc):
                return -np.inf, worths, scores
            w[n] = acc
            worths[n, t] = acc
            loglik += acc
        o = orderings[t]
        run = -np.inf
        for r in range(N - 1, -1, -1):
            run = _logaddexp(run, w[o[r]])
            lse[r] = run
        for r in range(N):
            loglik -= lse[r]
        cum = -np.inf
        for r in range(N):
            cum = _logaddexp(cum, -lse[r])
            n = o[r]
            scores[n, t] = 1.0 - np.exp(w[n] + cum)
        for n in range(N):
            e[n] = phi * e[n] + alpha * scores[n, t]
    if not np.isfinite(loglik):
        return -np.inf, worths, scores
    return loglik, worths, scores


@dataclass
class DrmData:
    """Rankings (T x N) with an optional N x K x T covariate array."""

    rankings: RankingSeries
    covariates: np.ndarray | None = None
    covariate_names: list = field(default_factory=list)

    def __post_init__(self):
        N, T = self.rankings.n_dmus, self.rankings.n_periods
        if self.covariates is None:
            self.covariates = np.zeros((N, 0, T))
        self.covariates = np.ascontiguousarray(self.covariates, dtype=float)
        if self.covariates.ndim != 3 or self.covariates.shape[0] != N or self.covariates.shape[2] != T:
            raise ValidationError(f"covariates must have shape (N={N}, K, T={T}), got {self.covariates.shape}")
        if not np.all(np.isfinite(self.covariates)):
            raise ValidationError("covariates contain missing or non-finite values")
        if T < 2:
            raise ValidationError("at least two periods are required")
        K = self.covariates.shape[1]
        if not self.covariate_names:
            self.covariate_names = [f"z{k + 1}" for k in range(K)]
        if len(self.covariate_names) != K:
            raise ValidationError("one name per covariate is required")

    @property
    def n_dmus(self) -> int:
        return self.rankings.n_dmus

    @property
    def n_periods(self) -> int:
        return self.rankings.n_periods

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def without_covariates(self) -> "DrmData":
        return DrmData(self.rankings)


@dataclass
class DrmParameters:
    omega: np.ndarray
    beta: np.ndarray
    phi: float
    alpha: float

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float).ravel()
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        self.phi = float(self.phi)
        self.alpha = float(self.alpha)
        if abs(self.omega.sum()) > 1e-10 * max(1.0, np.abs(self.omega).sum()):
            raise ValidationError(f"individual effects must sum to zero (sum = {self.omega.sum():.3g})")


class _Layout:
    """Maps the free-parameter vector to model parameters, honoring fixed values."""

    def __init__(self, n_dmus, n_cov, fix_phi=None, fix_alpha=None, dmu_labels=None, cov_names=None):
        self.N, self.K = n_dmus, n_cov
        self.fix_phi, self.fix_alpha = fix_phi, fix_alpha
        labels = dmu_labels if dmu_labels is not None else list(range(1, n_dmus + 1))
        cov_names = cov_names if cov_names is not None else [f"z{k + 1}" for k in range(n_cov)]
        self.names = [f"omega[{l}]" for l in labels[:-1]] + [f"beta[{c}]" for c in cov_names]
        if fix_phi is None:
            self.names.append("phi")
        if fix_alpha is None:
            self.names.append("alpha")
        self.size = len(self.names)

    def unpack(self, theta):
        N, K = self.N, self.K
        omega = np.empty(N)
        omega[:-1] = theta[: N - 1]
        omega[-1] = -theta[: N - 1].sum()
        beta = theta[N - 1: N - 1 + K]
        i = N - 1 + K
        if self.fix_phi is None:
            phi = theta[i]
            i += 1
        else:
            phi = self.fix_phi
        alpha = theta[i] if self.fix_alpha is None else self.fix_alpha
        return omega, beta, phi, alpha

    def pack(self, omega, beta, phi, alpha):
        parts = [np.asarray(omega, dtype=float)[:-1], np.asarray(beta, dtype=float)]
        if self.fix_phi is None:
            parts.append([phi])
        if self.fix_alpha is None:
            parts.append([alpha])
        return np.concatenate(parts).astype(float)


@dataclass
class FilterResult:
    worths: np.ndarray
    scores: np.ndarray
    loglik: float


def filter_worths(data: DrmData, params: DrmParameters) -> FilterResult:
    """Run the worth recursion forward and accumulate the log-likelihood.

    A parameter vector that makes worths non-finite yields ``loglik = -inf``
    rather than an exception, so optimizers can back off.
    """
    if params.omega.size != data.n_dmus or params.beta.size != data.n_covariates:
        raise ValidationError("parameter dimensions do not match the data")
    ll, worths, scores = _filter_kernel(params.omega, params.beta, params.phi, params.alpha,
                                        data.covariates, data.rankings.orderings)
    return FilterResult(worths, scores, float(ll))


@dataclass
class Identifiability:
    ok: bool
    leaders: list = field(default_factory=list)
    rest: list = field(default_factory=list)


def check_identifiability(rankings: RankingSeries) -> Identifiability:
    """Test Hunter's condition on the "a outranked b" graph.

    The MLE exists iff that graph is strongly connected. Otherwise the
    certificate is a source strongly connected component: a set of DMUs never
    outranked by anyone outside it. ``leaders``/``rest`` hold 0-based indices.
    """
    R = rankings.ranks
    beats = (R[:, :, None] < R[:, None, :]).any(axis=0)
    n_comp, labels = connected_components(beats, directed=True, connection="strong")
    if n_comp == 1:
        return Identifiability(True)
    incoming = np.zeros(n_comp, dtype=bool)
    for a, b in zip(*np.nonzero(beats)):
        if labels[a] != labels[b]:
            incoming[labels[b]] = True
    sources = [c for c in range(n_comp) if not incoming[c]]
    # deterministic choice: the source component holding the lowest index
    comp = min(sources, key=lambda c: np.flatnonzero(labels == c).min())
    leaders = np.flatnonzero(labels == comp).tolist()
    rest = np.flatnonzero(labels != comp).tolist()
    return Identifiability(False, leaders, rest)


@dataclass(frozen=True)
class FitOptions:
    """Optimizer settings. ``fix_phi``/``fix_alpha`` pin a dynamic parameter."""

    fix_phi: float | None = None
    fix_alpha: float | None = None
    grad_tol: float = 1e-4
    bfgs_gtol: float = 1e-7
    max_iter: int = 1000
    fd_step: float = 1e-6
    hessian_step: float = 1e-5
    restarts: int = 5
    check_identifiability: bool = True


@dataclass
class DrmFit:
    params: DrmParameters
    loglik: float
    param_names: list
    estimates: np.ndarray
    covariance: np.ndarray
    std_errors: np.ndarray
    p_values: np.ndarray
    method: str
    worths: np.ndarray
    scores: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool
    options: FitOptions
    dmu_labels: list
    covariate_names: list
    n_periods: int
    replicates: np.ndarray | None = None
    n_failed: int = 0

    def omega_std_errors(self) -> np.ndarray:
        """Standard errors of all N individual effects (omega_N by the delta method)."""
        N = self.params.omega.size
        if self.method == "bootstrap" and self.replicates is not None:
            free = self.replicates[:, : N - 1]
            full = np.column_stack([free, -free.sum(axis=1)])
            return full.std(axis=0, ddof=1)
        cov = self.covariance[: N - 1, : N - 1]
        last = np.sqrt(max(cov.sum(), 0.0))
        return np.append(self.std_errors[: N - 1], last)

    def table(self) -> pd.DataFrame:
        """Every parameter (including implied and fixed ones) with inference."""
        N = self.params.omega.size
        K = self.params.beta.size
        se_omega = self.omega_std_errors()
        rows = []
        for n, label in enumerate(self.dmu_labels):
            rows.append(("omega", str(label), self.params.omega[n], se_omega[n], n == N - 1, False))
        for k, name in enumerate(self.covariate_names):
            se = self.std_errors[N - 1 + k]
            rows.append(("beta", name, self.params.beta[k], se, False, False))
        i = N - 1 + K
        for name, fixed in (("phi", self.options.fix_phi), ("alpha", self.options.fix_alpha)):
            value = getattr(self.params, name)
            if fixed is None:
                rows.append((name, name, value, self.std_errors[i], False, False))
                i += 1
            else:
                rows.append((name, name, value, np.nan, False, True))
        df = pd.DataFrame(rows, columns=["kind", "name", "estimate", "std_error", "implied", "fixed"])
        df["p_value"] = _p_values(df["estimate"].to_numpy(), df["std_error"].to_numpy())
        df["method"] = self.method
        return df


def _p_values(est, se):
    est = np.asarray(est, dtype=float)
    se = np.asarray(se, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(est / se)
    return 2.0 * stats.norm.sf(z)


class _Objective:
    """Mean negative log-likelihood with central-difference derivatives."""

    def __init__(self, data: DrmData, layout: _Layout, options: FitOptions):
        self.z = data.covariates
        self.orderings = data.rankings.orderings
        self.T = data.n_periods
        self.layout = layout
        self.opts = options
        self.evaluations = 0

    def loglik(self, theta) -> float:
        self.evaluations += 1
        omega, beta, phi, alpha = self.layout.unpack(np.asarray(theta, dtype=float))
        return _filter_kernel(omega, np.ascontiguousarray(beta), phi, alpha, self.z, self.orderings)[0]

    def __call__(self, theta) -> float:
        ll = self.loglik(theta)
        return -ll / self.T if np.isfinite(ll) else np.inf

    def gradient(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        g = np.empty_like(theta)
        steps = self.opts.fd_step * np.maximum(1.0, np.abs(theta))
        for i, h in enumerate(steps):
            up = theta.copy()
            up[i] += h
            down = theta.copy()
            down[i] -= h
            g[i] = (self(up) - self(down)) / (2.0 * h)
        if not np.all(np.isfinite(g)):
            g[~np.isfinite(g)] = 0.0
        return g

    def hessian(self, theta) -> np.ndarray:
        """Hessian of the (unscaled) negative log-likelihood."""
        theta = np.asarray(theta, dtype=float)
        P = theta.size
        h = self.opts.hessian_step * np.maximum(1.0, np.abs(theta))
        f = lambda x: -self.loglik(x)  # noqa: E731
        f0 = f(theta)
        H = np.empty((P, P))
        for i in range(P):
            ei = np.zeros(P)
            ei[i] = h[i]
            H[i, i] = (f(theta + ei) - 2.0 * f0 + f(theta - ei)) / h[i] ** 2
            for j in range(i):
                ej = np.zeros(P)
                ej[j] = h[j]
                H[i, j] = H[j, i] = (
                    f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)
                ) / (4.0 * h[i] * h[j])
        return H


def _minimize(obj: _Objective, start, options: FitOptions):
    # BFGS can stall on line-search precision loss where curvature changes
    # fast; restarting from the stall point resets the inverse-Hessian model.
    x = np.asarray(start, dtype=float)
    nit = 0
    for _ in range(options.restarts + 1):
        res = optimize.minimize(obj, x, jac=obj.gradient, method="BFGS",
                                options={"gtol": options.bfgs_gtol, "maxiter": options.max_iter})
        nit += res.nit
        grad_norm = float(np.linalg.norm(obj.gradient(res.x)))
        ok = bool(np.isfinite(res.fun) and grad_norm <= options.grad_tol)
        if ok or not np.isfinite(res.fun) or np.allclose(res.x, x, rtol=0, atol=1e-12):
            break
        x = res.x
    res.nit = nit
    return res, grad_norm, ok


def _covariance(H):
    try:
        np.linalg.cholesky(H)
        cond = np.linalg.cond(H)
        if cond < 1e12:
            return np.linalg.inv(H)
        reason = f"condition number {cond:.2g}"
    except np.linalg.LinAlgError:
        reason = "not positive definite"
    warnings.warn(f"Hessian {reason}; using the pseudo-inverse", EstimationWarning, stacklevel=3)
    return np.linalg.pinv(H)


def fit(data: DrmData, options: FitOptions | None = None, starts=None,
        compute_covariance: bool = True) -> DrmFit:
    """Maximum likelihood estimate with Hessian-based inference.

    Runs BFGS from each start (default: zeros with ``phi=0.5, alpha=0.1``, then
    the static fit with ``phi = alpha = 0``) and keeps the best start whose
    gradient norm of the mean log-likelihood is below ``options.grad_tol``.
    """
    opts = options or FitOptions()
    if opts.check_identifiability:
        ident = check_identifiability(data.rankings)
        if not ident.ok:
            labels = data.rankings.dmu_labels
            raise IdentifiabilityError([labels[i] for i in ident.leaders], [labels[i] for i in ident.rest])

    N, K = data.n_dmus, data.n_covariates
    layout = _Layout(N, K, opts.fix_phi, opts.fix_alpha, data.rankings.dmu_labels, data.covariate_names)
    obj = _Objective(data, layout, opts)

    if starts is None:
        starts = [layout.pack(np.zeros(N), np.zeros(K), 0.5, 0.1)]
        dynamic = opts.fix_phi is None or opts.fix_alpha is None
        if dynamic:
            static_opts = dataclasses.replace(opts, fix_phi=0.0, fix_alpha=0.0, check_identifiability=False)
            static_layout = _Layout(N, K, 0.0, 0.0)
            static_obj = _Objective(data, static_layout, static_opts)
            res, _, ok = _minimize(static_obj, np.zeros(static_layout.size), static_opts)
            if ok:
                omega, beta, _, _ = static_layout.unpack(res.x)
                starts.append(layout.pack(omega, beta, 0.0, 0.0))
    else:
        starts = [np.asarray(s, dtype=float) for s in starts]

    best = None
    for start in starts:
        res, grad_norm, ok = _minimize(obj, start, opts)
        logger.debug("start %s -> loglik %.6f, |grad| %.2e, ok=%s", start, -res.fun * obj.T, grad_norm, ok)
        if ok and (best is None or res.fun < best[0].fun):
            best = (res, grad_norm)
    if best is None:
        raise ConvergenceError(
            f"no start reached gradient norm <= {opts.grad_tol} (N={N}, K={K}, T={data.n_periods})"
        )
    res, grad_norm = best
    theta = np.asarray(res.x, dtype=float)
    omega, beta, phi, alpha = layout.unpack(theta)
    params = DrmParameters(omega, beta.copy(), phi, alpha)
    filt = filter_worths(data, params)
    if abs(phi) >= 1:
        warnings.warn(f"estimated autoregressive parameter {phi:.3f} is outside (-1, 1)",
                      EstimationWarning, stacklevel=2)

    P = layout.size
    if compute_covariance:
        cov = _covariance(obj.hessian(theta))
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    else:
        cov = np.full((P, P), np.nan)
        se = np.full(P, np.nan)
    return DrmFit(
        params=params,
        loglik=filt.loglik,
        param_names=layout.names,
        estimates=theta,
        covariance=cov,
        std_errors=se,
        p_values=_p_values(theta, se),
        method="hessian",
        worths=filt.worths,
        scores=filt.scores,
        iterations=int(res.nit),
        grad_norm=grad_norm,
        converged=True,
        options=opts,
        dmu_labels=list(data.rankings.dmu_labels),
        covariate_names=list(data.covariate_names),
        n_periods=data.n_periods,
    )


def simulate(params: DrmParameters, covariates, T: int, rng: np.random.Generator,
             dmu_labels=None) -> RankingSeries:
    """Draw T rankings, feeding each realized score back into the next worths."""
    N = params.omega.size
    z = np.zeros((N, 0, T)) if covariates is None else np.asarray(covariates, dtype=float)
    if z.shape[0] != N or z.shape[1] != params.beta.size or z.shape[2] < T:
        raise ValidationError("covariates do not match the parameters or horizon")
    e = np.zeros(N)
    ranks = np.empty((T, N), dtype=np.int64)
    for t in range(T):
        w = params.omega + z[:, :, t] @ params.beta + e
        ranks[t] = pl.sample(w, rng)
        e = params.phi * e + params.alpha * pl.score(w, ranks[t])
    return RankingSeries(ranks, dmu_labels)


def replicate_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Seed for bootstrap replicate ``index``; independent of execution order."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


def _bootstrap_one(args):
    data, fit_, index, seed = args
    rng = np.random.default_rng(replicate_seed(seed, index))
    sim = simulate(fit_.params, data.covariates, data.n_periods, rng, data.rankings.dmu_labels)
    sim_data = DrmData(sim, data.covariates, data.covariate_names)
    try:
        refit = fit(sim_data, fit_.options, starts=[fit_.estimates], compute_covariance=False)
    except (ConvergenceError, IdentifiabilityError):
        try:
            refit = fit(sim_data, fit_.options, compute_covariance=False)
        except (ConvergenceError, IdentifiabilityError) as exc:
            logger.info("bootstrap replicate %d dropped: %s", index, exc)
            return None
    return refit.estimates


def bootstrap(data: DrmData, fit_: DrmFit, replications: int, seed: int, threads: int = 1,
              max_failure_rate: float = 0.1) -> DrmFit:
    """Parametric bootstrap inference around a converged fit.

    Each replicate simulates a ranking panel from the fitted parameters with
    the observed covariates, then re-estimates. Standard errors are the
    standard deviations of replicate estimates; p-values are two-sided normal
    with ``z = estimate / SE``. Replicates are seeded from
    ``(seed, replicate index)`` so serial and threaded runs agree exactly.
    """
    if int(replications) < 1:
        raise ValidationError("bootstrap needs at least one replication")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EstimationWarning)
        tasks = [(data, fit_, b, seed) for b in range(replications)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_bootstrap_one, tasks))
        else:
            results = [_bootstrap_one(t) for t in tasks]
    kept = [r for r in results if r is not None]
    n_failed = len(results) - len(kept)
    if n_failed > max_failure_rate * replications or len(kept) < 2:
        raise ConvergenceError(f"{n_failed} of {replications} bootstrap replicates failed to converge")
    est = np.vstack(kept)
    cov = np.atleast_2d(np.cov(est, rowvar=False, ddof=1))
    se = est.std(axis=0, ddof=1)
    return dataclasses.replace(
        fit_,
        covariance=cov,
        std_errors=se,
        p_values=_p_values(fit_.estimates, se),
        method="bootstrap",
        replicates=est,
        n_failed=n_failed,
    )


@dataclass
class LongTermRanking:
    ranks: np.ndarray
    table: pd.DataFrame
    fit: DrmFit


def long_term_ranking(data: DrmData, options: FitOptions | None = None, tie_tol: float = 1e-4) -> LongTermRanking:
    """Rank DMUs by the individual effects of a covariate-free fit.

    Without covariates the unconditional worth of DMU n is omega_n, so
    descending omega gives the long-run ranking. Effects within ``tie_tol``
    are tied and ordered by index with a warning.
    """
    fit_ = fit(data.without_covariates(), options)
    omega = fit_.params.omega
    ranks = rank_cross_section(omega, tie_tol=tie_tol)
    table = pd.DataFrame({
        "dmu": [str(l) for l in fit_.dmu_labels],
        "omega": omega,
        "std_error": fit_.omega_std_errors(),
        "rank": ranks,
    }).sort_values("rank", kind="stable").reset_index(drop=True)
    return LongTermRanking(ranks, table, fit_)
