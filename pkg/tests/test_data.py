import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varpro.data import (ClassIndicator, ClassResponse, Dataset, FeatureKind, Identity,
                         ParseError, RealResponse, Schema, SchemaError, SurvIndicator,
                         SurvivalResponse, TruncatedTime, g_value, g_values, load_csv,
                         rng_stream, split_data, write_csv)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_regression_csv(tmp_path):
    f = _write(tmp_path / "d.csv", "x1,x2,y\n1,2,3\n4,5,6\n7,8,9.5\n")
    d = load_csv(f, Schema(response="y"))
    assert (d.n, d.p) == (3, 2)
    assert d.names == ("x1", "x2")
    np.testing.assert_array_equal(d.y, [3, 6, 9.5])


def test_load_survival_csv(tmp_path):
    f = _write(tmp_path / "s.csv", "a,time,status\n0.5,1.2,1\n0.1,3.0,0\n")
    d = load_csv(f, Schema(family="survival", time="time", event="status"))
    assert d.family == "survival"
    assert d.response(1) == SurvivalResponse(3.0, 0)
    assert d.p == 1


def test_parse_error_names_row_and_column(tmp_path):
    f = _write(tmp_path / "d.csv", "x1,y\n1,2\n3,abc\n")
    with pytest.raises(ParseError, match=r"row 3, column 'y'"):
        load_csv(f, Schema(response="y"))


@pytest.mark.parametrize("cell", ["", "NaN", "nan", "NA"])
def test_missing_values_rejected(tmp_path, cell):
    f = _write(tmp_path / "d.csv", f"x1,y\n1,2\n{cell},3\n")
    with pytest.raises(ParseError):
        load_csv(f, Schema(response="y"))


def test_infinite_value_rejected(tmp_path):
    f = _write(tmp_path / "d.csv", "x1,y\ninf,2\n1,3\n")
    with pytest.raises(ParseError):
        load_csv(f, Schema(response="y", ordered=("x1",)))


def test_missing_column_is_schema_error(tmp_path):
    f = _write(tmp_path / "d.csv", "x1,y\n1,2\n")
    with pytest.raises(SchemaError):
        load_csv(f, Schema(response="target"))
    with pytest.raises(SchemaError):
        load_csv(f, Schema(family="survival", time="t"))


def test_categorical_levels_first_appearance(tmp_path):
    f = _write(tmp_path / "d.csv", "c,x,y\nb,1,0\na,2,1\nb,3,0\nc,4,1\n")
    d = load_csv(f, Schema(family="classification", response="y"))
    assert d.kinds[0].is_categorical
    assert d.kinds[0].levels == ("b", "a", "c")
    np.testing.assert_array_equal(d.X[:, 0], [0, 1, 0, 2])
    assert d.classes == ("0", "1")


def test_comment_lines_are_skipped(tmp_path):
    f = _write(tmp_path / "d.csv", "# produced elsewhere\nx1,y\n1,2\n3,4\n")
    assert load_csv(f, Schema(response="y")).n == 2


def test_drop_columns(tmp_path):
    f = _write(tmp_path / "d.csv", "id,x1,y\n1,0.1,2\n2,0.2,4\n")
    d = load_csv(f, Schema(response="y", drop=("id",)))
    assert d.names == ("x1",)


def test_split_sizes():
    a, b = split_data(1000, 0.632, rng_stream(1))
    assert (a.size, b.size) == (632, 368)
    a, b = split_data(2, 0.5, rng_stream(1))
    assert (a.size, b.size) == (1, 1)


def test_split_deterministic():
    a1, b1 = split_data(100, rng=rng_stream(5, 2))
    a2, b2 = split_data(100, rng=rng_stream(5, 2))
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(b1, b2)


def test_split_errors():
    with pytest.raises(ValueError):
        split_data(1)
    with pytest.raises(ValueError):
        split_data(10, alpha=1.0)


@settings(max_examples=1000)
@given(st.integers(2, 5000), st.integers(0, 2**63 - 1), st.floats(0.01, 0.99))
def test_split_partitions_exactly(n, seed, alpha):
    a, b = split_data(n, alpha, rng_stream(seed))
    assert a.size + b.size == n
    assert np.intersect1d(a, b).size == 0
    np.testing.assert_array_equal(np.union1d(a, b), np.arange(n))


def test_g_value_examples():
    assert g_value(Identity(), RealResponse(3.2)) == 3.2
    assert g_value(ClassIndicator(1), ClassResponse(2, 3)) == 0
    assert g_value(ClassIndicator(2), ClassResponse(2, 3)) == 1
    assert g_value(TruncatedTime(3), SurvivalResponse(5, 1)) == 3
    assert g_value(TruncatedTime(3), SurvivalResponse(2, 0)) == 2
    assert g_value(SurvIndicator(1.0), SurvivalResponse(1.5, 0)) == 1


def test_g_value_family_mismatch():
    with pytest.raises(TypeError):
        g_value(TruncatedTime(1), RealResponse(1.0))
    with pytest.raises(TypeError):
        g_value(Identity(), ClassResponse(0, 2))
    with pytest.raises(ValueError):
        g_value(ClassIndicator(4), ClassResponse(0, 2))


def test_target_invariants():
    with pytest.raises(ValueError):
        TruncatedTime(0)
    with pytest.raises(ValueError):
        SurvIndicator(-1)
    with pytest.raises(ValueError):
        FeatureKind("categorical", ("a",))


@settings(max_examples=200)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=60), st.integers(0, 3))
def test_class_indicator_mean_is_frequency(labels, c):
    y = np.array(labels)
    d = Dataset(np.zeros((y.size, 1)), (), "classification", y=y, classes=("a", "b", "c", "d"))
    vals = g_values(ClassIndicator(c), d)
    assert set(np.unique(vals)) <= {0.0, 1.0}
    assert vals.mean() == np.mean(y == c)


def test_dataset_rejects_bad_input():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), (), "regression", y=[1.0])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), (), "regression", y=[1.0])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), (), "survival", time=[1.0, -1.0], event=[1, 0])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), (), "classification", y=[0, 3], classes=("a", "b"))


def test_dataset_is_read_only():
    d = Dataset(np.zeros((2, 1)), (), "regression", y=[1.0, 2.0])
    with pytest.raises(ValueError):
        d.X[0, 0] = 1.0


@settings(max_examples=100)
@given(st.integers(1, 30), st.integers(1, 4), st.integers(0, 10**6))
def test_csv_round_trip_bit_exact(tmp_path_factory, n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p)) * 10.0 ** rng.integers(-8, 8, size=p)
    cats = rng.integers(0, 3, size=n).astype(float)
    cats[:3] = [0, 1, 2][: min(3, n)]
    kinds = (FeatureKind(),) * p + (FeatureKind("categorical", ("u", "v", "w")),)
    d = Dataset(np.column_stack([X, cats]), kinds, "regression", y=rng.standard_normal(n))
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(d, path, comments=["a note"])
    back = load_csv(path, Schema(response="y", categorical=(d.names[-1],)))
    assert back.X[:, :p].tobytes() == d.X[:, :p].tobytes()
    assert back.y.tobytes() == d.y.tobytes()
    assert [back.kinds[-1].levels[int(v)] for v in back.X[:, -1]] == \
        [d.kinds[-1].levels[int(v)] for v in d.X[:, -1]]


def test_survival_round_trip(tmp_path):
    d = Dataset(np.array([[0.1], [0.2]]), (), "survival", time=[1.5, 2.25], event=[1, 0])
    write_csv(d, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv", Schema(family="survival", time="time", event="status"))
    np.testing.assert_array_equal(back.time, d.time)
    np.testing.assert_array_equal(back.event, d.event)


def test_rng_stream_independent_of_order():
    a = rng_stream(3, 1, 2).random(5)
    rng_stream(3, 9).random(100)
    np.testing.assert_array_equal(a, rng_stream(3, 1, 2).random(5))
    assert not np.array_equal(a, rng_stream(3, 2, 1).random(5))
