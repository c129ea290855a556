"""End-to-end two-stage analysis and the bundled synthetic fixture."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from . import dynamic
from .data import PanelDataset, describe, load_panel
from .dea import MODELS, efficiency_panel, rank_panel
from .exceptions import IdentifiabilityError, ValidationError
from .iia import CORRELATIONS, iia_experiment
from .panel import COV_TYPES, ESTIMATORS, panel_ols, second_stage_table

logger = logging.getLogger(__name__)

BUNDLE_FILES = (
    "summary.csv",
    "correlation.csv",
    "scores.csv",
    "rankings.csv",
    "drm_fit.csv",
    "worths.csv",
    "long_term_ranking.csv",
    "regressions.csv",
    "second_stage.csv",
    "iia.csv",
)
MANIFEST = "manifest.txt"


@dataclass
class PipelineConfig:
    inputs: str
    outputs: str
    context: str | None = None
    out_dir: str = "rankdea-report"
    lag_inputs: int = 1
    lag_outputs: int = 0
    lag_context: int = 1
    interpolate: bool = False
    covariates: list | None = None
    bootstrap: int | None = None
    seed: int = 0
    threads: int = 1
    rank_model: str = "h"
    estimator: str = "entity_fe"
    cov_type: str = "hc0"
    iia_correlation: str = "pearson"

    def validate(self) -> None:
        if self.bootstrap is not None and int(self.bootstrap) < 1:
            raise ValidationError("bootstrap replications must be a positive integer")
        if self.threads < 1:
            raise ValidationError("threads must be at least 1")
        if min(self.lag_inputs, self.lag_outputs, self.lag_context) < 0:
            raise ValidationError("lags must be nonnegative")
        if self.rank_model not in ("ap", "h"):
            raise ValidationError("rankings must come from the AP or H model (CCR ties efficient DMUs)")
        if self.estimator not in ESTIMATORS:
            raise ValidationError(f"estimator must be one of {ESTIMATORS}")
        if self.cov_type not in COV_TYPES:
            raise ValidationError(f"cov_type must be one of {COV_TYPES}")
        if self.iia_correlation not in CORRELATIONS:
            raise ValidationError(f"IIA correlation must be one of {CORRELATIONS}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")

    def digest(self) -> str:
        """Hash of every setting that can influence the numeric outputs."""
        d = dataclasses.asdict(self)
        for key in ("out_dir", "threads"):
            d.pop(key)
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()


@dataclass
class ReportBundle:
    out_dir: Path
    files: dict
    manifest: dict
    data: PanelDataset = None
    panels: dict = field(default_factory=dict)
    drm_fit: object = None
    drm_boot: object = None


def load_config_panel(config: PipelineConfig) -> PanelDataset:
    return load_panel(
        config.inputs, config.outputs, config.context,
        lag_inputs=config.lag_inputs, lag_outputs=config.lag_outputs,
        lag_context=config.lag_context, interpolate=config.interpolate,
    )


def select_covariates(data: PanelDataset, names) -> tuple[np.ndarray, list]:
    if names is None:
        return data.context, list(data.context_names)
    unknown = [n for n in names if n not in data.context_names]
    if unknown:
        raise ValidationError(f"unknown contextual variables {unknown}; available: {data.context_names}")
    idx = [data.context_names.index(n) for n in names]
    return data.context[:, idx, :], list(names)


def scores_frame(panels: dict) -> pd.DataFrame:
    first = next(iter(panels.values()))
    index = pd.MultiIndex.from_product([first.dmu_labels, first.periods], names=["dmu", "period"])
    df = pd.DataFrame(index=index)
    for tag, panel in panels.items():
        df[tag] = panel.scores.ravel()
        df[f"{tag}_status"] = panel.statuses.ravel()
    return df.reset_index()


def rankings_frame(rankings) -> pd.DataFrame:
    index = pd.MultiIndex.from_product([rankings.dmu_labels, rankings.periods], names=["dmu", "period"])
    return pd.DataFrame({"rank": rankings.ranks.T.ravel()}, index=index).reset_index()


def drm_frame(fit, boot=None) -> pd.DataFrame:
    t = fit.table()[["kind", "name", "estimate", "implied", "fixed", "std_error", "p_value"]]
    t = t.rename(columns={"std_error": "se_hessian", "p_value": "p_hessian"})
    if boot is not None:
        b = boot.table()
        t["se_bootstrap"] = b["std_error"].to_numpy()
        t["p_bootstrap"] = b["p_value"].to_numpy()
    else:
        t["se_bootstrap"] = np.nan
        t["p_bootstrap"] = np.nan
    return t


def worths_frame(fit, periods) -> pd.DataFrame:
    index = pd.MultiIndex.from_product([fit.dmu_labels, periods], names=["dmu", "period"])
    return pd.DataFrame({"worth": fit.worths.ravel(), "score": fit.scores.ravel()}, index=index).reset_index()


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, lineterminator="\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_pipeline(config: PipelineConfig) -> ReportBundle:
    """load -> describe -> DEA panels -> rankings -> ranking model (+ bootstrap)
    -> long-term ranking -> panel regressions -> comparison table -> IIA,
    all written to ``config.out_dir`` with a ``manifest.txt``."""
    config.validate()
    data = load_config_panel(config)
    z, z_names = select_covariates(data, config.covariates)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}

    def emit(name, df):
        path = out / name
        _write_csv(df, path)
        files[name] = path

    summary, corr = describe(data)
    emit("summary.csv", summary)
    emit("correlation.csv", corr.reset_index())

    panels = {tag: efficiency_panel(data, tag, threads=config.threads) for tag in MODELS}
    for tag, panel in panels.items():
        for dmu, period, status in panel.failures:
            logger.warning("%s solve failed for dmu=%s period=%s (%s)", tag, dmu, period, status)
    emit("scores.csv", scores_frame(panels))

    rankings = rank_panel(panels[config.rank_model])
    emit("rankings.csv", rankings_frame(rankings))

    ident = dynamic.check_identifiability(rankings)
    if not ident.ok:
        labels = rankings.dmu_labels
        raise IdentifiabilityError([labels[i] for i in ident.leaders], [labels[i] for i in ident.rest])

    drm_data = dynamic.DrmData(rankings, z, z_names)
    drm_fit = dynamic.fit(drm_data)
    drm_boot = None
    if config.bootstrap is not None:
        drm_boot = dynamic.bootstrap(drm_data, drm_fit, int(config.bootstrap), config.seed,
                                     threads=config.threads)
    emit("drm_fit.csv", drm_frame(drm_fit, drm_boot))
    emit("worths.csv", worths_frame(drm_fit, rankings.periods))

    long_term = dynamic.long_term_ranking(drm_data)
    emit("long_term_ranking.csv", long_term.table)

    regressions = {}
    if z.shape[1] > 0:
        for tag, panel in panels.items():
            if np.any(~np.isfinite(panel.scores)):
                logger.warning("skipping %s regression: panel has missing or infinite scores", tag)
                continue
            regressions[tag] = panel_ols(panel.scores, z, config.estimator, config.cov_type, z_names)
    reg_rows = []
    for tag, res in regressions.items():
        f = res.frame()
        f.insert(0, "model", tag)
        f["r_squared"] = res.r_squared
        f["n_obs"] = res.n_obs
        f["estimator"] = res.estimator_tag
        f["cov_type"] = res.cov_type
        reg_rows.append(f)
    emit("regressions.csv", pd.concat(reg_rows, ignore_index=True) if reg_rows else
         pd.DataFrame(columns=["model", "variable", "coefficient", "std_error", "p_value",
                               "r_squared", "n_obs", "estimator", "cov_type"]))
    table = second_stage_table(regressions, drm_fit, drm_boot)
    emit("second_stage.csv", table)

    iia = iia_experiment(data, config.rank_model, config.iia_correlation, threads=config.threads)
    emit("iia.csv", iia.changes)

    manifest = {
        "config_hash": config.digest(),
        "seed": config.seed,
        "bootstrap_replications": config.bootstrap if config.bootstrap is not None else 0,
        "bootstrap_failed": drm_boot.n_failed if drm_boot is not None else 0,
        "n_dmus": data.n_dmus,
        "n_periods": data.n_periods,
        "periods": f"{data.periods[0]}-{data.periods[-1]}",
        "covariates": ";".join(z_names),
        "drm_loglik": repr(drm_fit.loglik),
        "iia_unchanged_fraction": repr(iia.unchanged_fraction),
        "iia_correlation": repr(iia.rank_correlation),
        "iia_correlation_method": iia.correlation_method,
        "input_sha256.inputs": _sha256(config.inputs),
        "input_sha256.outputs": _sha256(config.outputs),
    }
    if config.context is not None:
        manifest["input_sha256.context"] = _sha256(config.context)
    manifest["files"] = ",".join(files)
    for name, path in files.items():
        manifest[f"sha256.{name}"] = _sha256(path)
    (out / MANIFEST).write_text("".join(f"{k}={v}\n" for k, v in manifest.items()))
    return ReportBundle(out, files, manifest, data, panels, drm_fit, drm_boot)


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line and not line.startswith("#"):
            key, _, value = line.partition("=")
            out[key] = value
    return out


# --- synthetic fixture ------------------------------------------------------

def synthetic_frames(n_dmus: int = 6, n_periods: int = 12, seed: int = 2029, shock_sd: float = 1.0) -> dict:
    """Simulated research-efficiency style panel (2 inputs, 2 outputs, 2 context).

    Raw files cover ``n_periods + 1`` years so that one-year lags leave
    ``n_periods`` analysis periods. Efficiency responds positively to ``voice``
    and negatively to ``gdp`` through a persistent latent process.
    """
    rng = np.random.default_rng(seed)
    years = np.arange(2007, 2007 + n_periods + 1)
    dmus = [f"D{i + 1}" for i in range(n_dmus)]
    R = len(years)
    size = rng.lognormal(3.0, 0.8, size=n_dmus)
    expenditure = size[:, None] * rng.lognormal(0.0, 0.15, size=(n_dmus, R))
    researchers = 20 * size[:, None] * rng.lognormal(0.0, 0.15, size=(n_dmus, R))
    voice = rng.normal(1.0, 0.4, size=(n_dmus, 1)) + rng.normal(0, 0.25, size=(n_dmus, R))
    gdp = rng.lognormal(0.0, 0.3, size=(n_dmus, 1)) * rng.lognormal(0, 0.1, size=(n_dmus, R))
    latent = np.zeros((n_dmus, R))
    for t in range(1, R):
        latent[:, t] = 0.6 * latent[:, t - 1] + rng.normal(0, shock_sd, n_dmus)
    eff = np.exp(0.4 * voice - 0.3 * gdp + latent + rng.normal(0, 0.2, size=(n_dmus, 1)))
    # outputs at year t respond to inputs and context of year t-1
    eff_lag = np.roll(eff, 1, axis=1)
    exp_lag = np.roll(expenditure, 1, axis=1)
    res_lag = np.roll(researchers, 1, axis=1)
    base = np.sqrt(exp_lag * res_lag / 20)
    publications = 30 * base * eff_lag * rng.lognormal(0, 0.1, size=(n_dmus, R))
    citations = 500 * base * eff_lag * rng.lognormal(0, 0.3, size=(n_dmus, R))

    def frame(cols):
        rows = {"dmu": np.repeat(dmus, R), "period": np.tile(years, n_dmus)}
        rows.update({k: np.round(v.ravel(), 4) for k, v in cols.items()})
        return pd.DataFrame(rows)

    return {
        "inputs": frame({"expenditure": expenditure, "researchers": researchers}),
        "outputs": frame({"publications": publications, "citations": citations}),
        "context": frame({"voice": voice, "gdp": gdp}),
    }


def write_synthetic_fixture(out_dir, **kwargs) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, df in synthetic_frames(**kwargs).items():
        paths[name] = out / f"{name}.csv"
        _write_csv(df, paths[name])
    return paths


def bundled_fixture() -> dict:
    """Paths of the synthetic fixture shipped with the package."""
    root = resources.files("rankdea") / "fixtures" / "synthetic"
    return {name: str(root / f"{name}.csv") for name in ("inputs", "outputs", "context")}
