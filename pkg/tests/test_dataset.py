import datetime as dt

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from gameseg.dataset import (
    AcademicCalendar,
    CalendarError,
    ConstantColumnWarning,
    DataValidationError,
    FeatureMatrix,
    SchemaError,
    StandardizationError,
    SynthConfig,
    derive_flags,
    generate_synthetic,
    load_csv,
    parse_channels,
    precision_from_support,
    standardize,
    write_csv,
)

HEADER = "timestamp,player_id,rank,points,ceiling_light_status,ceiling_light_usage\n"


def test_load_three_rows_sorted(write):
    p = write(
        "d.csv",
        HEADER
        + "2018-02-20T10:02,b,2,5,1,3\n"
        + "2018-02-20T10:01,b,2,4,0,3\n"
        + "2018-02-20T10:00,a,1,9,1,0\n",
    )
    ds = load_csv(p)
    assert len(ds) == 3
    assert ds.frame["player_id"].tolist() == ["a", "b", "b"]
    assert ds.frame.loc[ds.frame.player_id == "b", "timestamp"].is_monotonic_increasing
    assert ds.errors == ()
    recs = list(ds.records)
    assert recs[0].resource_status == {"ceiling_light": 1.0}
    assert recs[0].rank == 1


def test_missing_rank_column_names_rank(write):
    p = write("d.csv", "timestamp,player_id,points\n2018-02-20T10:00,a,1\n")
    with pytest.raises(SchemaError, match="rank"):
        load_csv(p)


def test_bad_status_row_reports_rule(write):
    rows = "".join(f"2018-02-20T10:{m:02d},a,1,1,{1 if m else 2},{m}\n" for m in range(40))
    ds = load_csv(write("d.csv", HEADER + rows))
    assert len(ds) == 39
    (err,) = ds.errors
    assert err.line == 2 and err.column == "ceiling_light_status" and err.value == "2"
    assert "resource_status in {0,1}" in str(err)


def test_too_many_bad_rows_abort(write):
    rows = "".join(f"2018-02-20T10:{m:02d},a,1,1,{2 if m < 3 else 0},0\n" for m in range(20))
    with pytest.raises(DataValidationError, match="limit is 5%"):
        load_csv(write("d.csv", HEADER + rows))


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_csv("/nonexistent/data.csv")


def test_schema_mapping_and_duplicates(write):
    p = write(
        "d.csv",
        "When,Who,Standing,Humid\n"
        + "".join(f"2018-02-20T10:{m:02d},a,3,{50 + m}\n" for m in range(30))
        + "2018-02-20T10:05,a,3,99\n",
    )
    s = write("schema.txt", "timestamp=When\nplayer_id=Who\nrank=Standing\nhumidity=Humid\n")
    ds = load_csv(p, s)
    assert ds.feature_names == ("rank", "humidity")
    assert len(ds) == 30
    assert ds.errors[0].rule.startswith("strictly increasing")
    # the first occurrence is kept
    assert ds.frame.loc[5, "humidity"] == 55


def test_usage_must_not_decrease_within_day(write):
    rows = "".join(f"2018-02-20T10:{m:02d},a,1,1,0,{m}\n" for m in range(30))
    rows += "2018-02-20T10:30,a,1,1,0,3\n"  # drop
    rows += "2018-02-21T00:00,a,1,1,0,0\n"  # new day may restart
    ds = load_csv(write("d.csv", HEADER + rows))
    assert [e.line for e in ds.errors] == [32]
    assert len(ds) == 31


def test_derive_flags_examples():
    frame = pd.DataFrame(
        {
            "timestamp": pd.to_datetime(["2017-10-03T08:30", "2017-11-25T14:00", "2017-10-03T00:00", "2017-10-03T18:00"]),
            "player_id": "a",
            "rank": 1,
        }
    )
    from gameseg.dataset import Dataset

    cal = AcademicCalendar({"final": ((dt.date(2017, 11, 20), dt.date(2017, 12, 2)),)})
    out = derive_flags(Dataset(frame, ("rank",)), cal).frame
    tue = out.iloc[0]
    assert (tue.morning, tue.afternoon, tue.evening, tue.weekday, tue.weekend) == (1, 0, 0, 1, 0)
    assert tue[["break", "midterm", "final", "holiday"]].sum() == 0
    sat = out.iloc[1]
    assert sat.weekend == 1 and sat.final == 1
    midnight = out.iloc[2]
    assert midnight.morning == 0 and midnight.evening == 0 and midnight.afternoon == 0
    assert out.iloc[3].evening == 1


def test_calendar_overlap_rejected(write):
    p = write("cal.txt", "break=2017-10-01..2017-10-05\nbreak=2017-10-05..2017-10-09\n")
    with pytest.raises(CalendarError, match="overlap"):
        AcademicCalendar.from_file(p)


def test_calendar_file_and_hours(write):
    p = write("cal.txt", "# term\nmidterm=2017-10-10..2017-10-12\nmorning_start=5\n")
    cal = AcademicCalendar.from_file(p)
    assert cal.morning_start == 5
    assert cal.ranges["midterm"] == ((dt.date(2017, 10, 10), dt.date(2017, 10, 12)),)


@given(st.lists(st.datetimes(min_value=dt.datetime(2000, 1, 1), max_value=dt.datetime(2030, 1, 1)), min_size=1, max_size=30))
def test_flag_partition_property(times):
    from gameseg.dataset import Dataset

    frame = pd.DataFrame({"timestamp": pd.to_datetime(times), "player_id": "a", "rank": 1})
    out = derive_flags(Dataset(frame, ("rank",))).frame
    day = out.morning + out.afternoon + out.evening
    assert day.isin([0, 1]).all()
    assert (out.weekday + out.weekend == 1).all()


def test_standardize_arithmetic():
    fm = FeatureMatrix.from_array(np.array([[1.0], [2.0], [3.0]]))
    s = np.sqrt(2.0 / 3.0)
    np.testing.assert_allclose(fm.values[:, 0], [-1 / s, 0, 1 / s], atol=1e-12)
    assert abs(fm.values[0, 0] + 1.2247) < 1e-4


def test_standardize_idempotent():
    rng = np.random.default_rng(1)
    fm = FeatureMatrix.from_array(rng.standard_normal((50, 3)))
    again = FeatureMatrix.from_array(fm.values)
    np.testing.assert_allclose(again.values, fm.values, atol=1e-10)


def test_constant_column_excluded_with_warning():
    with pytest.warns(ConstantColumnWarning, match="c"):
        fm = FeatureMatrix.from_array(np.array([[5.0, 1], [5, 2], [5, 3]]), ["c", "x"])
    assert fm.vertex_labels == ("x",) and fm.excluded == ("c",)
    with pytest.raises(StandardizationError):
        FeatureMatrix.from_array(np.ones((3, 2)), warn=False)


@given(
    hnp.arrays(
        np.float64,
        st.tuples(st.integers(2, 40), st.integers(1, 4)),
        elements=st.floats(-1e3, 1e3, allow_nan=False, allow_subnormal=False),
    )
)
def test_standardize_moments_property(a):
    spread = a.max(axis=0) - a.min(axis=0)
    keep = spread > 1e-3 * np.maximum(1, np.abs(a).max(axis=0))
    if not keep.any():
        return
    a = a[:, keep]
    fm = FeatureMatrix.from_array(a, warn=False)
    assert np.all(np.abs(fm.values.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(fm.values.std(axis=0) - 1) < 1e-8)
    assert np.all(np.isfinite(fm.values))


def test_standardize_forward_fill_limit():
    from gameseg.dataset import Dataset

    ts = pd.to_datetime(["2018-01-01T00:00", "2018-01-01T00:20", "2018-01-01T00:31", "2018-01-01T00:40", "2018-01-01T00:41"])
    frame = pd.DataFrame({"timestamp": ts, "player_id": "a", "rank": 1, "x": [1.0, np.nan, np.nan, 3.0, 4.0], "y": [1.0, 2, 3, 5, 4]})
    fm = standardize(Dataset(frame, ("rank", "x", "y")), ["x", "y"])
    # 00:20 is 20 min after the last value: filled; 00:31 is 31 min after: dropped
    assert fm.row_ids.tolist() == [0, 1, 3, 4]
    np.testing.assert_allclose(fm.column_means[0], np.mean([1, 1, 3, 4]))


def test_roundtrip_write_load(tmp_path):
    ds, _ = generate_synthetic(SynthConfig(S=4, N=300, k=2, seed=3))
    ds = derive_flags(ds)
    back = load_csv(write_csv(ds, tmp_path / "x.csv"))
    assert back.feature_names == ds.feature_names
    for c in ds.feature_names:
        np.testing.assert_allclose(back.frame[c].to_numpy(float), ds.frame[c].to_numpy(float), rtol=1e-12, atol=0)
    assert (back.frame["timestamp"] == ds.frame["timestamp"]).all()
    assert (back.frame["player_id"] == ds.frame["player_id"]).all()


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=25), st.integers(0, 5))
def test_roundtrip_property(vals, offset):
    import tempfile
    from pathlib import Path

    from gameseg.dataset import Dataset

    n = len(vals)
    frame = pd.DataFrame(
        {
            "timestamp": pd.Timestamp("2018-03-01") + pd.to_timedelta(np.arange(n) * 7, unit="min"),
            "player_id": "q",
            "rank": np.arange(n, dtype=np.int64) % 4 + 1 + offset,
            "temperature": vals,
        }
    )
    ds = Dataset(frame, ("rank", "temperature"))
    with tempfile.TemporaryDirectory() as d:
        back = load_csv(write_csv(ds, Path(d) / "r.csv"))
    np.testing.assert_allclose(back.frame["temperature"], vals, rtol=1e-12)
    assert back.frame["rank"].tolist() == frame["rank"].tolist()


def test_synthetic_deterministic():
    cfg = SynthConfig(S=5, N=400, k=3, channels=parse_channels("f1>f7:0.8"), seed=11)
    a, ta = generate_synthetic(cfg)
    b, tb = generate_synthetic(cfg)
    pd.testing.assert_frame_equal(a.frame, b.frame)
    np.testing.assert_array_equal(ta.labels, tb.labels)
    c, _ = generate_synthetic(cfg, seed=12)
    assert not a.frame["f0"].equals(c.frame["f0"])


def test_synthetic_zero_channels_not_listed():
    _, truth = generate_synthetic(SynthConfig(S=4, N=100, channels=parse_channels("f0>f5:0,f1>f6:0")))
    assert truth.channels == ()


def test_synthetic_chain_partial_correlations():
    ds, truth = generate_synthetic(SynthConfig(S=10, N=2000, seed=5))
    Y = ds.frame[[f"f{j}" for j in range(10)]].to_numpy()
    P = np.linalg.inv(np.cov(Y, rowvar=False))
    d = np.sqrt(np.diag(P))
    pc = -P / np.outer(d, d)
    for i in range(10):
        for j in range(i + 1, 10):
            if (i, j) in truth.support:
                assert abs(pc[i, j] - 0.4) < 0.1
            else:
                assert abs(pc[i, j]) < 0.1


def test_non_pd_precision_rejected():
    with pytest.raises(ValueError, match="positive definite"):
        precision_from_support(4, {(0, 1), (1, 2), (2, 3), (0, 3), (0, 2), (1, 3)}, 0.6)


def test_synth_config_from_text():
    cfg = SynthConfig.from_text("S=6\nN=500\nk=3\nsupport=random(0.3)\nchannels=f1>f2:0.5\nseed=9\n")
    assert (cfg.S, cfg.N, cfg.k, cfg.support, cfg.seed) == (6, 500, 3, "random(0.3)", 9)
    assert cfg.channels[0].coef == 0.5
    _, truth = generate_synthetic(cfg)
    # an existing feature overwritten by a channel loses its planted edges
    assert all(2 not in e for e in truth.support)


def test_grid_support():
    from gameseg.dataset import support_edges

    e = support_edges(9, "grid", np.random.default_rng(0))
    assert len(e) == 12 and (0, 1) in e and (0, 3) in e and (2, 3) not in e
