"""Panel OLS of efficiency scores on contextual variables, and the comparison table.

The default is the within (entity fixed effects) estimator with White HC0
standard errors. Pooled OLS with an intercept and the HC1 small-sample
scaling are available as options.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .exceptions import CollinearityError, ValidationError

ESTIMATORS = ("entity_fe", "pooled")
COV_TYPES = ("hc0", "hc1")
SCORE_COLUMNS = ("ccr", "ap", "h", "log")


@dataclass
class RegressionResult:
    coefficients: np.ndarray
    robust_std_errors: np.ndarray
    p_values: np.ndarray
    estimator_tag: str
    cov_type: str
    n_obs: int
    r_squared: float
    variable_names: list
    intercept: float | None = None
    df_resid: int = 0

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "variable": self.variable_names,
            "coefficient": self.coefficients,
            "std_error": self.robust_std_errors,
            "p_value": self.p_values,
        })


def _collinear_columns(X, names, tol=1e-10):
    bad = []
    kept = []
    scale = max(1.0, np.abs(X).max(initial=0.0))
    for k in range(X.shape[1]):
        trial = X[:, kept + [k]]
        if np.linalg.matrix_rank(trial, tol=tol * scale * np.sqrt(X.shape[0])) < len(kept) + 1:
            bad.append(names[k])
        else:
            kept.append(k)
    return bad


def panel_ols(y, z, estimator: str = "entity_fe", cov_type: str = "hc0", variable_names=None) -> RegressionResult:
    """Regress an N x T score panel on N x K x T covariates.

    ``entity_fe`` demeans y and every covariate within each DMU before OLS;
    ``pooled`` adds an intercept instead. The covariance is the White sandwich
    ``(X'X)^-1 X' diag(e^2) X (X'X)^-1``, scaled by ``n / df`` for HC1.
    p-values are two-sided from Student's t with the residual degrees of
    freedom (entity effects count against them).
    """
    if estimator not in ESTIMATORS:
        raise ValidationError(f"estimator must be one of {ESTIMATORS}")
    if cov_type not in COV_TYPES:
        raise ValidationError(f"cov_type must be one of {COV_TYPES}")
    y = np.asarray(getattr(y, "scores", y), dtype=float)
    z = np.asarray(z, dtype=float)
    if y.ndim != 2 or z.ndim != 3 or z.shape[0] != y.shape[0] or z.shape[2] != y.shape[1]:
        raise ValidationError(f"shape mismatch: y {y.shape}, z {z.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise ValidationError("y and z must not contain missing or non-finite cells")
    N, K, T = z.shape
    names = list(variable_names) if variable_names is not None else [f"z{k + 1}" for k in range(K)]
    if K == 0:
        raise ValidationError("at least one covariate is required")

    Y = y.ravel()                                  # DMU-major, period-minor
    X = z.transpose(0, 2, 1).reshape(N * T, K)
    if estimator == "entity_fe":
        Y = (y - y.mean(axis=1, keepdims=True)).ravel()
        X = (z - z.mean(axis=2, keepdims=True)).transpose(0, 2, 1).reshape(N * T, K)
        design, design_names = X, names
        df_resid = N * T - K - N
    else:
        design = np.column_stack([np.ones(N * T), X])
        design_names = ["const"] + names
        df_resid = N * T - K - 1
    bad = _collinear_columns(design, design_names)
    if bad:
        raise CollinearityError(bad)
    if df_resid <= 0:
        raise ValidationError("not enough observations for the number of parameters")

    xtx_inv = np.linalg.inv(design.T @ design)
    coef = xtx_inv @ design.T @ Y
    resid = Y - design @ coef
    meat = (design * resid[:, None] ** 2).T @ design
    cov = xtx_inv @ meat @ xtx_inv
    n = N * T
    if cov_type == "hc1":
        cov = cov * n / df_resid
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.abs(coef / se)
    tstat = np.where(np.isnan(tstat), 0.0, tstat)
    pvals = 2.0 * stats.t.sf(tstat, df_resid)

    centered = Y - Y.mean() if estimator == "pooled" else Y
    tss = centered @ centered
    r2 = 1.0 - (resid @ resid) / tss if tss > 0 else np.nan

    intercept = None
    if estimator == "pooled":
        intercept = float(coef[0])
        coef, se, pvals = coef[1:], se[1:], pvals[1:]
    return RegressionResult(coef, se, pvals, estimator, cov_type, n, float(r2), names, intercept, df_resid)


def stars(p: float) -> str:
    if p is None or not np.isfinite(p):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def second_stage_table(regressions: dict, drm_fit=None, drm_boot=None, digits: int = 2) -> pd.DataFrame:
    """Side-by-side coefficients of the score regressions and the ranking model.

    ``regressions`` maps "ccr"/"ap"/"h"/"log" to :class:`RegressionResult`.
    Columns per model: ``<m>_coef``, ``<m>_se``, ``<m>_p``, ``<m>_cell``
    (e.g. ``"0.21*"``) and ``<m>_se_cell`` (``"(0.09)"``), where ``m`` runs over
    the score columns plus ``hess`` and ``boot``. ``sign_flag`` marks
    variables whose regression coefficients all share a sign that the
    Hessian-based ranking coefficient contradicts.
    """
    names = None
    for res in regressions.values():
        names = list(res.variable_names)
        break
    if names is None and drm_fit is not None:
        names = list(drm_fit.covariate_names)
    if names is None:
        raise ValidationError("nothing to tabulate")
    rows = names + ["phi", "alpha"]
    table = pd.DataFrame({"variable": rows})

    def put(col, coef, se, p):
        table[f"{col}_coef"] = coef
        table[f"{col}_se"] = se
        table[f"{col}_p"] = p
        table[f"{col}_cell"] = [
            "" if not np.isfinite(c) else f"{c:.{digits}f}{stars(pv)}" for c, pv in zip(coef, p)
        ]
        table[f"{col}_se_cell"] = ["" if not np.isfinite(s) else f"({s:.{digits}f})" for s in se]

    blank = np.full(len(rows), np.nan)
    for col in SCORE_COLUMNS:
        res = regressions.get(col)
        if res is None:
            put(col, blank, blank, blank)
            continue
        if list(res.variable_names) != names:
            raise ValidationError(f"regression {col!r} uses different covariates")
        pad = [np.nan, np.nan]
        put(col, np.r_[res.coefficients, pad], np.r_[res.robust_std_errors, pad], np.r_[res.p_values, pad])

    for col, f in (("hess", drm_fit), ("boot", drm_boot)):
        if f is None:
            put(col, blank, blank, blank)
            continue
        t = f.table()
        t = t[t["kind"].isin(["beta", "phi", "alpha"])].set_index("name")
        if list(t.index[: len(names)]) != names:
            raise ValidationError(f"ranking model {col!r} uses different covariates")
        t = t.reindex(rows)
        put(col, t["estimate"].to_numpy(), t["std_error"].to_numpy(), t["p_value"].to_numpy())

    reg = table[[f"{c}_coef" for c in SCORE_COLUMNS if c in regressions]].to_numpy()
    rank = table["hess_coef"].to_numpy() if drm_fit is not None else table["boot_coef"].to_numpy()
    flags = []
    for i in range(len(rows)):
        signs = np.sign(reg[i]) if reg.size else np.array([])
        signs = signs[np.isfinite(signs)] if signs.size else signs
        same = signs.size > 0 and np.all(signs == signs[0]) and signs[0] != 0
        flags.append(bool(same and np.isfinite(rank[i]) and np.sign(rank[i]) == -signs[0]))
    table["sign_flag"] = flags
    return table


def sign_disagreements(table: pd.DataFrame) -> list[str]:
    return table.loc[table["sign_flag"], "variable"].tolist()
