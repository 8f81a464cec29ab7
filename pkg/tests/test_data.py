import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llorma.data import (
    MOVIELENS_SCALE,
    ObservedMatrix,
    RatingScale,
    format_ratings,
    parse_ratings,
    project_observed,
    split_train_test,
)
from llorma.exceptions import (
    DuplicateError,
    EmptyInputError,
    ParseError,
    RangeError,
    ShapeError,
)


def test_parse_movielens_dat():
    m = parse_ratings(b"1::10::5.0::978300760\n2::10::3.0::978302109", "movielens-dat")
    assert m.shape == (2, 1)
    assert m.entries == [(0, 0, 5.0), (1, 0, 3.0)]
    assert list(m.row_ids) == ["1", "2"] and list(m.col_ids) == ["10"]


def test_parse_empty_stream():
    m = parse_ratings(b"", "tsv")
    assert m.shape == (0, 0) and m.nnz == 0


def test_parse_duplicate_rejected():
    with pytest.raises(DuplicateError):
        parse_ratings("1\t10\t5\t0\n1\t10\t5\t0\n", "tsv")


def test_parse_csv_header_and_crlf():
    m = parse_ratings("user,item,rating\r\n7,3,4\r\n8,3,2.5\r\n", "csv")
    assert m.entries == [(0, 0, 4.0), (1, 0, 2.5)]


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError, match="line 2"):
        parse_ratings("1::1::3\n1::2\n", "movielens-dat")
    with pytest.raises(ParseError, match="line 1"):
        parse_ratings("1::1::good\n", "movielens-dat")


def test_parse_out_of_scale():
    with pytest.raises(RangeError):
        parse_ratings("1::1::6\n", "movielens-dat")
    m = parse_ratings("1::1::6\n", "movielens-dat", scale=RatingScale(0, 10, 5))
    assert m.values[0] == 6.0


def test_parse_file_object_and_format_roundtrip():
    text = "u1::i1::4.0::1\nu2::i1::3.5::2\nu1::i2::1.0::3\n"
    m = parse_ratings(io.BytesIO(text.encode()), "movielens-dat")
    out = format_ratings(m, "movielens-dat")
    stripped = ["::".join(line.split("::")[:3]) for line in text.splitlines()]
    assert out.splitlines() == stripped
    again = parse_ratings(out, "movielens-dat")
    assert again.entries == m.entries


def test_observed_matrix_validation():
    with pytest.raises(DuplicateError):
        ObservedMatrix([0, 0], [1, 1], [1, 2], 2, 2)
    with pytest.raises(ShapeError):
        ObservedMatrix([2], [0], [1], 2, 2)
    with pytest.raises(RangeError):
        ObservedMatrix([0], [0], [9], 2, 2, scale=MOVIELENS_SCALE)


def test_observed_matrix_indexes_agree():
    m = ObservedMatrix([0, 1, 1, 2], [2, 0, 2, 1], [1, 2, 3, 4], 3, 3)
    from_rows = sorted((i, int(c), float(v)) for i, (cs, vs) in enumerate(m.row_index) for c, v in zip(cs, vs))
    from_cols = sorted((int(r), j, float(v)) for j, (rs, vs) in enumerate(m.col_index) for r, v in zip(rs, vs))
    assert from_rows == from_cols == sorted(tuple(e) for e in m.entries)
    assert not m.values.flags.writeable


def test_split_sizes():
    m = ObservedMatrix(np.arange(100) // 10, np.arange(100) % 10, np.full(100, 3.0), 10, 10)
    train, test = split_train_test(m, 0.1, seed=4)
    assert (train.nnz, test.nnz) == (90, 10)
    two = ObservedMatrix([0, 1], [0, 1], [1.0, 2.0], 2, 2)
    a, b = split_train_test(two, 0.5, seed=0)
    assert a.nnz == b.nnz == 1


def test_split_deterministic_and_empty():
    m = ObservedMatrix(np.arange(30) // 6, np.arange(30) % 6, np.linspace(1, 5, 30), 5, 6)
    a1, b1 = split_train_test(m, 0.3, seed=11)
    a2, b2 = split_train_test(m, 0.3, seed=11)
    assert a1.entries == a2.entries and b1.entries == b2.entries
    with pytest.raises(EmptyInputError):
        split_train_test(ObservedMatrix([], [], [], 3, 3), 0.1)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.floats(0.05, 0.95), st.integers(0, 2**31 - 1))
def test_split_partitions(m, fraction, seed):
    mat = ObservedMatrix(np.arange(m), np.zeros(m, dtype=int), np.ones(m), m, 1)
    train, test = split_train_test(mat, fraction, seed)
    assert sorted(train.entries + test.entries) == sorted(mat.entries)
    assert not set(train.entries) & set(test.entries)
    assert train.shape == test.shape == mat.shape


def test_project_examples():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(project_observed(X, [(0, 0), (1, 1)]), [[1, 0], [0, 4]])
    np.testing.assert_array_equal(project_observed(X, np.ones((2, 2), bool)), X)
    np.testing.assert_array_equal(project_observed(X, []), np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        project_observed(X, np.ones((3, 2), bool))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10**6))
def test_project_idempotent(n, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    mask = rng.random((n, k)) < 0.5
    once = project_observed(X, mask)
    np.testing.assert_array_equal(project_observed(once, mask), once)
