"""Panel ingestion, lagging, interpolation of gaps, and descriptive tables.

Every input CSV is long format with header ``dmu,period,<var>,...`` and integer
period labels. Lags are applied by label arithmetic: with an input lag of 1,
the inputs attached to period ``p`` are the raw values recorded at ``p - 1``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .dea import CrossSection
from .exceptions import DataError, ValidationError

logger = logging.getLogger(__name__)

GROUPS = ("inputs", "outputs", "context")


@dataclass
class PanelDataset:
    """Balanced panel of N DMUs over T periods.

    Arrays are indexed ``[dmu, variable, period]``.
    """

    dmu_labels: list
    periods: list
    inputs: np.ndarray
    outputs: np.ndarray
    context: np.ndarray | None = None
    input_names: list = field(default_factory=list)
    output_names: list = field(default_factory=list)
    context_names: list = field(default_factory=list)
    lags: dict = field(default_factory=lambda: {"inputs": 0, "outputs": 0, "context": 0})

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        N, T = len(self.dmu_labels), len(self.periods)
        if self.context is None:
            self.context = np.zeros((N, 0, T))
        self.context = np.asarray(self.context, dtype=float)
        for name in GROUPS:
            arr = getattr(self, name)
            if arr.ndim != 3 or arr.shape[0] != N or arr.shape[2] != T:
                raise ValidationError(f"{name} must have shape (N={N}, vars, T={T}), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains missing or non-finite values")
        if not self.input_names:
            self.input_names = [f"x{i + 1}" for i in range(self.inputs.shape[1])]
        if not self.output_names:
            self.output_names = [f"y{j + 1}" for j in range(self.outputs.shape[1])]
        if not self.context_names:
            self.context_names = [f"z{k + 1}" for k in range(self.context.shape[1])]
        if len(set(self.dmu_labels)) != N:
            raise ValidationError("DMU labels must be unique")
        if any(b <= a for a, b in zip(self.periods, self.periods[1:])):
            raise ValidationError("periods must be strictly increasing")
        if np.any(self.inputs <= 0):
            raise ValidationError("inputs must be strictly positive")
        if np.any(self.outputs < 0):
            raise ValidationError("outputs must be nonnegative")

    @property
    def n_dmus(self) -> int:
        return len(self.dmu_labels)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    def cross_section(self, t: int) -> CrossSection:
        return CrossSection(self.inputs[:, :, t], self.outputs[:, :, t], list(self.dmu_labels))

    def variables(self) -> pd.DataFrame:
        """All variables flattened to one row per (dmu, period) cell."""
        cols = {}
        for group, names in (("inputs", self.input_names), ("outputs", self.output_names),
                             ("context", self.context_names)):
            arr = getattr(self, group)
            for k, name in enumerate(names):
                cols[name] = arr[:, k, :].ravel()
        index = pd.MultiIndex.from_product([self.dmu_labels, self.periods], names=["dmu", "period"])
        return pd.DataFrame(cols, index=index)


def interpolate_missing(periods, values) -> np.ndarray:
    """Fill NaN cells from an OLS line of value on period.

    Observed cells are returned untouched. Cells outside the observed range
    are extrapolated from the same line.
    """
    x = np.asarray(periods, dtype=float)
    y = np.asarray(values, dtype=float).copy()
    missing = np.isnan(y)
    if not missing.any():
        return y
    if (~missing).sum() < 2:
        raise ValidationError("interpolation needs at least two observed points")
    slope, intercept = np.polyfit(x[~missing], y[~missing], 1)
    y[missing] = intercept + slope * x[missing]
    return y


@dataclass
class _RawTable:
    path: str
    names: list
    frame: pd.DataFrame  # index (dmu, period), one column per variable
    lines: dict  # (dmu, period) -> source line number


def _read_table(path) -> _RawTable:
    path = str(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise DataError("file not found", path) from None
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse CSV: {exc}", path) from None
    cols = [c.strip() for c in df.columns]
    if len(cols) < 3 or cols[0] != "dmu" or cols[1] != "period":
        raise DataError("header must be 'dmu,period,<var1>,...'", path, 1)
    names = cols[2:]
    if len(set(names)) != len(names):
        raise DataError("duplicate variable names in header", path, 1)

    records, keys, lines = [], [], {}
    for i, row in enumerate(df.itertuples(index=False, name=None)):
        line = i + 2
        dmu = row[0].strip()
        if not dmu:
            raise DataError("empty DMU label", path, line)
        try:
            period = int(row[1])
        except ValueError:
            raise DataError(f"period {row[1]!r} is not an integer", path, line) from None
        key = (dmu, period)
        if key in lines:
            raise DataError(f"duplicate row for dmu={dmu!r}, period={period} (first at line {lines[key]})",
                            path, line)
        lines[key] = line
        vals = []
        for name, cell in zip(names, row[2:]):
            cell = cell.strip()
            if cell == "" or cell.upper() == "NA":
                vals.append(np.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"non-numeric value {cell!r} in column {name!r}", path, line) from None
        records.append(vals)
        keys.append(key)
    if not records:
        raise DataError("no data rows", path)
    frame = pd.DataFrame(records, columns=names, index=pd.MultiIndex.from_tuples(keys, names=["dmu", "period"]))
    return _RawTable(path, names, frame, lines)


def _complete(table: _RawTable, dmus, interpolate: bool) -> dict:
    """Per-variable (dmu x period) arrays over the file's own period range."""
    periods = sorted({p for _, p in table.frame.index})
    grid = pd.MultiIndex.from_product([dmus, periods], names=["dmu", "period"])
    full = table.frame.reindex(grid)
    out = {}
    for name in table.names:
        arr = full[name].to_numpy().reshape(len(dmus), len(periods))
        if np.isnan(arr).any():
            if not interpolate:
                n, t = np.argwhere(np.isnan(arr))[0]
                key = (dmus[n], periods[t])
                line = table.lines.get(key)
                what = "missing value" if line is not None else "missing row"
                raise DataError(f"{what} for dmu={key[0]!r}, period={key[1]}, variable={name!r} "
                                "(enable interpolation to fill gaps)", table.path, line)
            for n in range(len(dmus)):
                if np.isnan(arr[n]).any():
                    try:
                        arr[n] = interpolate_missing(periods, arr[n])
                    except ValidationError:
                        raise DataError(f"cannot interpolate {name!r} for dmu={dmus[n]!r}: "
                                        "fewer than two observed periods", table.path) from None
                    logger.info("interpolated %s for %s", name, dmus[n])
        out[name] = dict(zip(periods, arr.T))
    return out


def load_panel(inputs, outputs, context=None, *, lag_inputs: int = 1, lag_outputs: int = 0,
               lag_context: int = 1, interpolate: bool = False) -> PanelDataset:
    """Read, align, complete and lag the three variable groups.

    The DMU set is taken from the inputs file; the other files must list the
    same DMUs. The resulting periods are those for which every group has a
    raw observation at ``period - lag``.
    """
    lags = {"inputs": lag_inputs, "outputs": lag_outputs, "context": lag_context}
    for name, lag in lags.items():
        if lag < 0:
            raise ValidationError(f"lag for {name} must be nonnegative")
    tables = {"inputs": _read_table(inputs), "outputs": _read_table(outputs)}
    if context is not None:
        tables["context"] = _read_table(context)

    dmus = list(dict.fromkeys(d for d, _ in tables["inputs"].frame.index))
    for name, table in tables.items():
        found = list(dict.fromkeys(d for d, _ in table.frame.index))
        extra = [d for d in found if d not in dmus]
        if extra:
            raise DataError(f"DMUs {extra} not present in the inputs file", table.path,
                            table.lines[next(k for k in table.lines if k[0] == extra[0])])
        absent = [d for d in dmus if d not in found]
        if absent:
            raise DataError(f"DMUs {absent} from the inputs file are absent", table.path)

    completed = {name: _complete(t, dmus, interpolate) for name, t in tables.items()}
    raw_periods = {name: set(next(iter(c.values())).keys()) for name, c in completed.items()}
    candidates = sorted(set().union(*(
        {p + lags[name] for p in ps} for name, ps in raw_periods.items()
    )))
    periods = [p for p in candidates if all(p - lags[name] in ps for name, ps in raw_periods.items())]
    if not periods:
        raise ValidationError("no period has all variable groups available after lagging")
    dropped = [p for p in candidates if p not in periods]
    if dropped:
        logger.info("dropped boundary periods without lagged data: %s", dropped)

    arrays = {}
    for name in GROUPS:
        if name not in completed:
            arrays[name] = np.zeros((len(dmus), 0, len(periods)))
            continue
        arrays[name] = np.stack(
            [np.stack([completed[name][var][p - lags[name]] for p in periods], axis=-1)
             for var in tables[name].names],
            axis=1,
        )
    return PanelDataset(
        dmu_labels=dmus,
        periods=periods,
        inputs=arrays["inputs"],
        outputs=arrays["outputs"],
        context=arrays["context"],
        input_names=tables["inputs"].names,
        output_names=tables["outputs"].names,
        context_names=tables["context"].names if "context" in tables else [],
        lags=lags,
    )


def describe(data: PanelDataset) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Five-number summary and Pearson correlation matrix of all variables.

    Quartiles use linear interpolation between order statistics (numpy's
    default): for 1..8 they are 2.75, 4.5 and 6.25.
    """
    cells = data.variables()
    groups = (["input"] * len(data.input_names) + ["output"] * len(data.output_names)
              + ["context"] * len(data.context_names))
    q = np.quantile(cells.to_numpy(), [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
    summary = pd.DataFrame(
        {"variable": cells.columns, "group": groups, "min": q[0], "q1": q[1], "median": q[2],
         "q3": q[3], "max": q[4]}
    )
    constant = [c for c in cells.columns if cells[c].nunique() <= 1]
    if constant:
        warnings.warn(f"constant variables {constant}: correlations undefined", UserWarning, stacklevel=2)
    corr = cells.corr(method="pearson")
    corr.index.name = "variable"
    return summary, corr
