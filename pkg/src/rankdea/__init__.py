"""Two-stage efficiency analysis: DEA super-efficiency rankings modelled by a
score-driven Plackett-Luce process, next to classic panel regressions."""

from .data import PanelDataset, describe, interpolate_missing, load_panel
from .dea import (
    CrossSection,
    EfficiencyPanel,
    RankingSeries,
    ap_score,
    ap_to_h,
    ccr_score,
    efficiency_panel,
    h_score,
    h_to_ap,
    log_score,
    rank_cross_section,
    rank_panel,
)
from .dynamic import (
    DrmData,
    DrmFit,
    DrmParameters,
    FitOptions,
    bootstrap,
    check_identifiability,
    filter_worths,
    fit,
    long_term_ranking,
    simulate,
)
from .exceptions import (
    CollinearityError,
    ConvergenceError,
    DataError,
    DeaError,
    IdentifiabilityError,
    NumericalError,
    RankDeaError,
    TieWarning,
    ValidationError,
)
from .iia import IiaReport, iia_experiment
from .lp import LinearProgram, LpSolution, LpStatus, SimplexOptions, solve
from .panel import RegressionResult, panel_ols, second_stage_table
from .pipeline import PipelineConfig, bundled_fixture, run_pipeline

__version__ = "0.1.0"
