import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from scipy import stats
from hypothesis import strategies as st

from rankdea.data import PanelDataset, describe, interpolate_missing, load_panel
from rankdea.exceptions import DataError, ValidationError


def _write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def small(tmp_path):
    inputs = _write(tmp_path / "in.csv", "dmu,period,x\nA,1,1\nA,2,2\nA,3,3\nB,1,10\nB,2,20\nB,3,30\n")
    outputs = _write(tmp_path / "out.csv", "dmu,period,y\nA,1,5\nA,2,6\nA,3,7\nB,1,8\nB,2,9\nB,3,4\n")
    return tmp_path, inputs, outputs


def test_input_lag_shifts_raw_values(small):
    _, inputs, outputs = small
    data = load_panel(inputs, outputs, lag_inputs=1)
    assert data.periods == [2, 3]
    assert data.inputs[:, 0, :].tolist() == [[1, 2], [10, 20]]
    assert data.outputs[:, 0, :].tolist() == [[6, 7], [9, 4]]
    assert data.lags["inputs"] == 1


def test_no_lag_keeps_all_periods(small):
    _, inputs, outputs = small
    data = load_panel(inputs, outputs, lag_inputs=0)
    assert data.periods == [1, 2, 3]


def test_missing_cell_names_the_cell(tmp_path, small):
    _, _, outputs = small
    bad = _write(tmp_path / "gap.csv", "dmu,period,x\nA,1,1\nA,2,\nA,3,3\nB,1,10\nB,2,20\nB,3,30\n")
    with pytest.raises(DataError) as err:
        load_panel(bad, outputs)
    msg = str(err.value)
    assert "gap.csv:3" in msg and "'A'" in msg and "period=2" in msg and "'x'" in msg
    assert err.value.line == 3


def test_missing_row_is_reported(tmp_path, small):
    _, _, outputs = small
    bad = _write(tmp_path / "row.csv", "dmu,period,x\nA,1,1\nA,2,2\nA,3,3\nB,1,10\nB,3,30\n")
    with pytest.raises(DataError, match="missing row for dmu='B', period=2"):
        load_panel(bad, outputs)


def test_interpolation_fills_gaps(tmp_path, small):
    _, _, outputs = small
    gap = _write(tmp_path / "gap.csv", "dmu,period,x\nA,1,1\nA,2,NA\nA,3,3\nB,1,10\nB,2,20\nB,3,30\n")
    data = load_panel(gap, outputs, lag_inputs=0, interpolate=True)
    assert data.inputs[0, 0, :] == pytest.approx([1, 2, 3])


def test_extra_dmu_is_an_alignment_error(tmp_path, small):
    _, inputs, _ = small
    outputs = _write(tmp_path / "o.csv", "dmu,period,y\nA,1,5\nA,2,6\nA,3,7\nB,1,8\nB,2,9\nB,3,4\nC,1,1\n")
    with pytest.raises(DataError, match=r"\['C'\] not present in the inputs file") as err:
        load_panel(inputs, outputs)
    assert err.value.line == 8


@pytest.mark.parametrize(
    "body, pattern",
    [
        ("dmu,period,x\nA,1,1\nA,1,2\n", "duplicate row"),
        ("dmu,period,x\nA,1,abc\n", "non-numeric value 'abc'"),
        ("dmu,year,x\nA,1,1\n", "header"),
        ("dmu,period,x\nA,one,1\n", "not an integer"),
    ],
)
def test_malformed_files(tmp_path, small, body, pattern):
    _, _, outputs = small
    with pytest.raises(DataError, match=pattern):
        load_panel(_write(tmp_path / "bad.csv", body), outputs)


def test_missing_file(tmp_path, small):
    _, _, outputs = small
    with pytest.raises(DataError, match="not found"):
        load_panel(str(tmp_path / "nope.csv"), outputs)


def test_nonpositive_input_rejected(tmp_path, small):
    _, _, outputs = small
    bad = _write(tmp_path / "z.csv", "dmu,period,x\nA,1,0\nA,2,2\nA,3,3\nB,1,10\nB,2,20\nB,3,30\n")
    with pytest.raises(ValidationError, match="strictly positive"):
        load_panel(bad, outputs, lag_inputs=0)


def test_interpolation_examples():
    assert interpolate_missing([1, 2, 3], [1, np.nan, 3])[1] == pytest.approx(2.0)
    filled = interpolate_missing([1, 2, 3, 4], [1, 2, np.nan, 5])
    # hand OLS on (1,1), (2,2), (4,5): slope 57/42 = 19/14, intercept 8/3 - 19/6 = -1/2
    ref = stats.linregress([1, 2, 4], [1, 2, 5])
    assert ref.slope == pytest.approx(19 / 14) and ref.intercept == pytest.approx(-0.5)
    assert filled[2] == pytest.approx(25 / 7, abs=1e-12)
    assert round(filled[2], 3) == 3.571
    same = np.array([4.0, 1.0, 2.0])
    assert np.array_equal(interpolate_missing([1, 2, 3], same), same)
    with pytest.raises(ValidationError):
        interpolate_missing([1, 2, 3], [np.nan, 1.0, np.nan])


@given(
    st.floats(-10, 10), st.floats(-10, 10),
    st.lists(st.booleans(), min_size=4, max_size=12).filter(lambda m: sum(not x for x in m) >= 2),
)
def test_interpolation_recovers_lines_and_keeps_observed(a, b, mask):
    t = np.arange(len(mask), dtype=float) + 2000
    truth = a + b * (t - 2000)
    values = np.where(mask, np.nan, truth)
    filled = interpolate_missing(t, values)
    observed = ~np.array(mask)
    assert np.array_equal(filled[observed], values[observed])
    assert filled == pytest.approx(truth, abs=1e-6)


def _panel(**context):
    N, T = 2, 4
    ctx = np.stack(list(context.values()), axis=1) if context else None
    return PanelDataset(["A", "B"], [1, 2, 3, 4], np.arange(1.0, 9.0).reshape(N, 1, T),
                        np.ones((N, 1, T)) * [[[1, 2, 3, 4]]], ctx, ["x"], ["y"], list(context))


def test_quartiles_use_linear_interpolation():
    summary, _ = describe(_panel(w=np.arange(2.0, 18.0, 2).reshape(2, 4)))
    row = summary.set_index("variable").loc["x"]
    assert (row["min"], row["q1"], row["median"], row["q3"], row["max"]) == (1.0, 2.75, 4.5, 6.25, 8.0)
    assert list(summary["group"]) == ["input", "output", "context"]


def test_proportional_and_constant_variables():
    data = _panel(double=2.0 * np.arange(1.0, 9.0).reshape(2, 4), flat=np.full((2, 4), 3.0))
    with pytest.warns(UserWarning, match="flat"):
        summary, corr = describe(data)
    assert corr.loc["x", "double"] == pytest.approx(1.0)
    assert corr["flat"].isna().all()
    flat = summary.set_index("variable").loc["flat", ["min", "q1", "median", "q3", "max"]]
    assert (flat == 3.0).all()


def test_lag_then_describe_equals_describe_of_shifted_files(tmp_path):
    rng = np.random.default_rng(0)
    dmus, years = ["A", "B", "C"], list(range(2000, 2006))

    def frame(name, shift=0):
        return pd.DataFrame({"dmu": np.repeat(dmus, len(years)),
                             "period": np.tile(np.array(years) + shift, len(dmus)),
                             name: rng.uniform(1, 5, len(dmus) * len(years)).round(3)})

    x, y, z = frame("x"), frame("y"), frame("z")
    paths = {}
    for name, df in (("x", x), ("y", y), ("z", z)):
        paths[name] = tmp_path / f"{name}.csv"
        df.to_csv(paths[name], index=False)
    lagged = load_panel(paths["x"], paths["y"], paths["z"], lag_inputs=1, lag_context=1)

    for name, df in (("x", x), ("z", z)):
        moved = df.assign(period=df["period"] + 1)
        moved.to_csv(tmp_path / f"{name}_moved.csv", index=False)
    manual = load_panel(tmp_path / "x_moved.csv", paths["y"], tmp_path / "z_moved.csv",
                        lag_inputs=0, lag_context=0)
    assert lagged.periods == manual.periods == years[1:]
    a, b = describe(lagged), describe(manual)
    pd.testing.assert_frame_equal(a[0], b[0])
    pd.testing.assert_frame_equal(a[1], b[1])
