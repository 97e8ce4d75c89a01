import io
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynasaga.data import (
    SplitSpec,
    SyntheticConfig,
    diag_covariance,
    generate_classification,
    generate_regression,
    map_binary_labels,
    parse_libsvm,
    serialize_libsvm,
    split,
)
from dynasaga.errors import ParseError
from dynasaga.model import LEAST_SQUARES, LossModel, empirical_risk

from conftest import random_dataset


def test_parse_single_line():
    data = parse_libsvm(b"+1 1:0.5 3:2\n")
    assert len(data) == 1 and data.dimension == 3
    s = data.sample(0)
    assert s.label == 1.0
    assert s.indices == (1, 3) and s.values == (0.5, 2.0)


def test_label_mapping():
    assert parse_libsvm(b"0 2:1\n1 1:1\n").y.tolist() == [-1.0, 1.0]
    assert map_binary_labels(np.array([1.0, 2.0, 2.0])).tolist() == [1.0, -1.0, -1.0]
    assert map_binary_labels(np.array([-1.0, 1.0])).tolist() == [-1.0, 1.0]
    with pytest.raises(ParseError):
        map_binary_labels(np.array([1.0, 2.0, 3.0]))
    assert parse_libsvm(b"3.5 1:1\n-2 1:1\n", mode="regression").y.tolist() == [3.5, -2.0]


def test_comments_blank_lines_and_zero_values():
    text = "# header\n\n+1 1:0 2:1.5e0 # trailing\n-1 4:-2\n"
    data = parse_libsvm(text)
    assert len(data) == 2 and data.dimension == 4
    assert data.sample(0).indices == (2,)


def test_stream_and_path_sources(tmp_path):
    p = tmp_path / "d.svm"
    p.write_bytes(b"1 1:1\n-1 2:1\n")
    a = parse_libsvm(p)
    b = parse_libsvm(io.BytesIO(p.read_bytes()))
    c = parse_libsvm(io.StringIO(p.read_text()))
    assert a == b == c


@pytest.mark.parametrize(
    "text, line",
    [
        ("1 1:1\n1 x:1\n", 2),
        ("1 1:1 1:2\n", 1),
        ("1 2:1 1:2\n", 1),
        ("1 0:1\n", 1),
        ("1 1:nan\n", 1),
        ("1\n", 1),
        ("abc 1:1\n", 1),
        ("1 1:1\n\n1 3\n", 3),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as err:
        parse_libsvm(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12), d=st.integers(1, 8))
def test_serialize_round_trip(seed, n, d):
    rng = np.random.Generator(np.random.PCG64(seed))
    data = random_dataset(rng, n, d, "regression")
    buf = io.StringIO()
    serialize_libsvm(data, buf)
    again = parse_libsvm(buf.getvalue(), mode="regression", dimension=d)
    assert again == data


def test_diag_covariance():
    assert diag_covariance(3, 0.25).tolist() == [1.0, 0.625, 0.25]
    assert diag_covariance(1, 0.3).tolist() == [1.0]
    assert diag_covariance(4, 1.0).tolist() == [1.0] * 4
    with pytest.raises(ValueError):
        diag_covariance(3, 0.0)


@given(d=st.integers(1, 50), min_eig=st.floats(1e-6, 1.0))
def test_diag_covariance_monotone_and_bounded(d, min_eig):
    c = diag_covariance(d, min_eig)
    assert np.all(np.diff(c) <= 0)
    assert c.min() >= min_eig * (1 - 1e-12) and c.max() <= 1.0


def test_noiseless_regression_is_exact():
    data, w = generate_regression(SyntheticConfig(n=50, d=4, sigma_noise=0.0, seed=3))
    np.testing.assert_array_equal(data.X.toarray() @ w, data.y)
    assert empirical_risk(LossModel(LEAST_SQUARES), w, data) <= 1e-18
    assert np.linalg.norm(w) == pytest.approx(1.0)


def test_generation_is_deterministic():
    cfg = SyntheticConfig(n=30, d=3, seed=9)
    assert generate_regression(cfg)[0] == generate_regression(cfg)[0]
    assert generate_classification(cfg)[0] == generate_classification(cfg)[0]
    assert generate_regression(cfg)[0] != generate_regression(SyntheticConfig(n=30, d=3, seed=10))[0]


def test_explicit_w_star():
    data, w = generate_regression(SyntheticConfig(n=5, d=2, sigma_noise=0.0, w_star=(2.0, -1.0)))
    assert w.tolist() == [2.0, -1.0]
    np.testing.assert_allclose(data.X.toarray() @ w, data.y)


def test_sample_covariance_range():
    n = 10_000
    data, _ = generate_regression(SyntheticConfig(n=n, d=10, min_eig=1 / math.sqrt(n), seed=1))
    A = data.X.toarray()
    eig = np.linalg.eigvalsh(A.T @ A / n)
    assert eig[-1] == pytest.approx(1.0, rel=0.15)
    assert eig[0] == pytest.approx(1 / math.sqrt(n), rel=0.15)


def test_classification_labels_and_normalization():
    data, _ = generate_classification(SyntheticConfig(n=200, d=5, seed=2), normalize_rows=True)
    assert set(np.unique(data.y)) == {-1.0, 1.0}
    np.testing.assert_allclose(data.sq_norms, 1.0)
    raw, _ = generate_classification(SyntheticConfig(n=200, d=5, seed=2))
    np.testing.assert_array_equal(raw.y, data.y)


def test_config_validation():
    with pytest.raises(ValueError):
        SyntheticConfig(n=0, d=1)
    with pytest.raises(ValueError):
        SyntheticConfig(n=5, d=2, min_eig=1.5)
    with pytest.raises(ValueError):
        SyntheticConfig(n=5, d=2, w_star=(1.0,))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        SyntheticConfig(n=2, d=5)
    assert caught


def test_split_sizes_partition_and_determinism(rng):
    data = random_dataset(rng, 10, 3)
    train, test = split(data, SplitSpec(0.9, seed=4))
    assert (len(train), len(test)) == (9, 1)
    rows = sorted(map(repr, train.samples())) + sorted(map(repr, test.samples()))
    assert sorted(rows) == sorted(map(repr, data.samples()))
    again = split(data, SplitSpec(0.9, seed=4))
    assert again[0] == train and again[1] == test
    with pytest.raises(ValueError):
        split(data.prefix(1), SplitSpec())
    with pytest.raises(ValueError):
        split(data.prefix(2), SplitSpec(0.99))
