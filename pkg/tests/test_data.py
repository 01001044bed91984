import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssfamon.data import (RawDataset, Standardizer, covariances, fit_standardizer, load_csv,
                          second_moment, standardize, temporal_ridge, write_csv)
from ssfamon.errors import DataError


def test_csv_round_trip_is_exact(tmp_path, rng):
    d = RawDataset(("a", "b"), rng.standard_normal((20, 2)) * 1e3)
    p = tmp_path / "d.csv"
    write_csv(p, d)
    back = load_csv(p)
    assert back.names == d.names
    assert np.array_equal(back.values, d.values)


@pytest.mark.parametrize("body, msg", [
    ("", "empty"),
    ("a,b\n", "no data rows"),
    ("a,b\n1,2\n3\n", "expected 2 fields"),
    ("a,b\n1,x\n", "cannot parse"),
    ("a,b\n1,nan\n", "non-finite"),
])
def test_malformed_csv(tmp_path, body, msg):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=msg):
        load_csv(p)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        load_csv(tmp_path / "nope.csv")


def test_dataset_validation():
    with pytest.raises(DataError):
        RawDataset(("a",), np.zeros((2, 1)))
    with pytest.raises(DataError):
        RawDataset(("a", "b"), np.zeros((5, 1)))
    with pytest.raises(DataError, match="non-finite"):
        RawDataset(("a",), np.array([[1.0], [np.inf], [2.0]]))


def test_constant_column_rejected():
    d = RawDataset(("a", "b"), np.column_stack([np.arange(10.0), np.ones(10)]))
    with pytest.raises(DataError, match="'b'"):
        fit_standardizer(d)


def test_standardize_moments(rng):
    d = RawDataset(("a", "b", "c"), rng.standard_normal((200, 3)) * [1, 10, 0.1] + [5, -3, 0])
    X = standardize(d, fit_standardizer(d))
    assert np.allclose(X.X.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(X.X.std(axis=0, ddof=1), 1, atol=1e-12)
    assert np.array_equal(X.Xdot, np.diff(X.X, axis=0))
    with pytest.raises(DataError):
        standardize(rng.standard_normal((5, 2)), fit_standardizer(d))


def test_standardizer_dict_round_trip(rng):
    s = Standardizer(rng.standard_normal(4), rng.random(4) + 0.5)
    t = Standardizer.from_dict(s.to_dict())
    assert np.array_equal(s.mean, t.mean) and np.array_equal(s.std, t.std)


def test_covariances_and_ridge(rng):
    d = RawDataset(("a", "b"), rng.standard_normal((100, 2)))
    X = standardize(d, fit_standardizer(d))
    Om, Od = covariances(X)
    assert np.allclose(Om, np.cov(X.X, rowvar=False))
    raw = X.Xdot.T @ X.Xdot / 99
    assert np.allclose(Od, raw + temporal_ridge(raw) * np.eye(2))


def test_ridge_floor_keeps_zero_temporal_covariance_definite():
    assert temporal_ridge(np.zeros((3, 3))) == 1e-12


@settings(max_examples=50, deadline=None)
@given(arrays(float, (12, 3), elements=st.floats(-1e3, 1e3)))
def test_second_moment_is_symmetric_psd(D):
    M = second_moment(D)
    assert np.array_equal(M, M.T)
    assert np.linalg.eigvalsh(M).min() >= -1e-9 * max(1.0, np.abs(M).max())
