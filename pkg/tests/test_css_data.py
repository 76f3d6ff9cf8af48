import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentcss.css_data import (CssFormatError, CssTensor, build_dyadic_covariates,
                                degree_profiles, dump_css, load_attributes, load_css,
                                offdiag_mask, threshold_consensus)

from conftest import random_css

FORMATS = ["long_csv", "matrix_stack", "json"]


def _long_csv(n, rows):
    return "perceiver,sender,receiver,value\n" + "".join(f"{j},{i},{k},{v}\n" for j, i, k, v in rows)


def _full_rows(n, value=0):
    return [(j, i, k, value) for j in range(1, n + 1) for i in range(1, n + 1)
            for k in range(1, n + 1) if i != k]


@pytest.mark.parametrize("fmt", FORMATS)
def test_roundtrip_is_bit_exact(fmt, rng):
    Y = random_css(6, rng)
    text = dump_css(Y, fmt)
    back = load_css(text, fmt)
    assert back == Y
    assert dump_css(back, fmt) == text


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 7), seed=st.integers(0, 2**31), fmt=st.sampled_from(FORMATS))
def test_roundtrip_property(n, seed, fmt):
    Y = random_css(n, np.random.default_rng(seed), density=0.5)
    assert load_css(dump_css(Y, fmt).encode(), fmt) == Y


def test_load_long_csv_basic():
    rows = _full_rows(3)
    rows[0] = (1, 1, 2, 1)
    Y = load_css(_long_csv(3, rows))
    assert Y.n_actors == 3 and Y.n_cells == 18
    assert Y.tie(0, 1, 0) == 1
    with pytest.raises(IndexError):
        Y.tie(1, 1, 0)


@pytest.mark.parametrize("mutate, message", [
    (lambda r: r[:-1], "incomplete"),
    (lambda r: r + [r[0]], "duplicate"),
    (lambda r: r + [(1, 2, 2, 0)], "diagonal"),
    (lambda r: [(1, 1, 2, 2)] + r[1:], "binary"),
    (lambda r: [(1, 0, 2, 0)] + r[1:], "range"),
    (lambda r: [(0, 1, 2, 0)] + r[1:], "range"),
])
def test_load_errors(mutate, message):
    text = _long_csv(3, mutate(_full_rows(3)))
    with pytest.raises(CssFormatError, match=message):
        load_css(text)


def test_malformed_record():
    with pytest.raises(CssFormatError):
        load_css("perceiver,sender,receiver,value\n1,2,x,0\n")


def test_single_actor_is_incomplete():
    with pytest.raises(CssFormatError, match="incomplete"):
        load_css(json.dumps({"n_actors": 1, "labels": ["a"], "ties": []}),
                 "json")
    with pytest.raises(CssFormatError, match="incomplete"):
        load_css("0\n", "matrix_stack")


def test_matrix_stack_diagonal_must_be_zero():
    block = "1 0\n0 0\n"
    with pytest.raises(CssFormatError):
        load_css(block + "0 0\n0 0\n", "matrix_stack")


def test_json_labels_survive():
    Y = CssTensor(np.zeros((3, 3, 3), dtype=np.int8), ("ann", "bo", "cy"))
    assert load_css(dump_css(Y, "json"), "json").actor_labels == ("ann", "bo", "cy")


def test_threshold_unanimous_and_empty():
    n = 4
    y = np.zeros((n, n, n), dtype=np.int8)
    y[0, 1, :] = 1
    Y = CssTensor(y)
    out = threshold_consensus(Y, 0.5)
    assert out[0, 1] == 1
    assert out.sum() == 1
    assert threshold_consensus(CssTensor(np.zeros_like(y)), 0.0).sum() == 0


def test_threshold_is_strict():
    n = 4
    y = np.zeros((n, n, n), dtype=np.int8)
    y[0, 1, :2] = 1
    assert threshold_consensus(CssTensor(y), 0.5)[0, 1] == 0
    assert threshold_consensus(CssTensor(y), 0.49)[0, 1] == 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), d1=st.floats(0, 0.99), d2=st.floats(0, 0.99))
def test_threshold_monotone_in_delta(seed, d1, d2):
    Y = random_css(5, np.random.default_rng(seed), density=0.5)
    lo, hi = sorted((d1, d2))
    assert np.all(threshold_consensus(Y, hi) <= threshold_consensus(Y, lo))


@pytest.mark.parametrize("fill", [0, 1])
def test_degree_profiles_constant(fill):
    n = 4
    y = np.full((n, n, n), fill, dtype=np.int8)
    y[~offdiag_mask(n)] = 0
    prof = degree_profiles(CssTensor(y))
    for arr in (prof.row_degree, prof.col_degree, prof.consensus_row_degree,
                prof.consensus_col_degree):
        assert np.all(arr == fill)


def test_degree_profiles_single_tie():
    y = np.zeros((3, 3, 3), dtype=np.int8)
    y[1, 2, 0] = 1                     # perceiver 1 sees 2 -> 3
    prof = degree_profiles(CssTensor(y))
    assert prof.row_degree[1, 0] == 0.5
    assert prof.col_degree[2, 0] == 0.5
    mask = np.ones((3, 3), bool)
    mask[1, 0] = False
    assert np.all(prof.row_degree[mask] == 0)
    mask = np.ones((3, 3), bool)
    mask[2, 0] = False
    assert np.all(prof.col_degree[mask] == 0)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 6), seed=st.integers(0, 2**31))
def test_degree_profiles_range(n, seed):
    prof = degree_profiles(random_css(n, np.random.default_rng(seed), 0.5))
    assert np.all((prof.row_degree >= 0) & (prof.row_degree <= 1))
    scaled = prof.row_degree * (n - 1)
    assert np.allclose(scaled, np.round(scaled), atol=1e-12)


def test_covariates_raw_values():
    table = {"actor": ["a", "b", "c"], "dept": ["x", "x", "y"], "age": [40.0, 40.0, 55.0]}
    X = build_dyadic_covariates(table, ["same:dept", ("abs_difference", "age")],
                                standardize=False)
    assert X.p == 3
    assert X.x[0, 1, 1] == 1.0 and X.x[0, 2, 1] == 0.0
    assert X.x[0, 1, 2] == 0.0 and X.x[0, 2, 2] == 15.0
    assert np.all(X.dyads()[:, 0] == 1.0)


def test_covariates_standardized_ages():
    table = {"actor": ["a", "b", "c"], "age": [30.0, 40.0, 50.0]}
    X = build_dyadic_covariates(table, ["absdiff:age"])
    col = X.dyads()[:, 1]
    # raw |differences| are 10, 20, 10, 10, 20, 10 -> mean 40/3
    raw = np.array([10, 20, 10, 10, 20, 10], float)
    assert X.means[0] == pytest.approx(raw.mean(), abs=1e-12)
    assert X.scales[0] == pytest.approx(raw.std(ddof=1), abs=1e-12)
    assert abs(col.mean()) < 1e-9
    assert abs(col.std(ddof=1) - 1.0) < 1e-9


def test_covariate_errors():
    table = {"actor": ["a", "b"], "dept": ["x", "y"], "age": [1.5, 2.5]}
    with pytest.raises(KeyError):
        build_dyadic_covariates(table, ["same:missing"])
    with pytest.raises(TypeError):
        build_dyadic_covariates(table, ["absdiff:dept"])
    with pytest.raises(TypeError):
        build_dyadic_covariates(table, ["same:age"])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_covariates_equivariant_under_relabeling(seed):
    rng = np.random.default_rng(seed)
    n = 6
    table = {"actor": [str(k) for k in range(n)],
             "dept": list(rng.choice(["a", "b", "c"], n)),
             "age": list(rng.integers(20, 60, n).astype(float))}
    perm = rng.permutation(n)
    shuffled = {k: [v[p] for p in perm] for k, v in table.items()}
    recipe = ["same:dept", "absdiff:age"]
    X = build_dyadic_covariates(table, recipe)
    Xp = build_dyadic_covariates(shuffled, recipe)
    np.testing.assert_allclose(Xp.x, X.x[np.ix_(perm, perm)], atol=1e-12)


def test_load_attributes_types():
    table = load_attributes(b"actor,dept,age\na,x,33\nb,y,41\n")
    assert table["dept"] == ["x", "y"]
    assert table["age"] == [33.0, 41.0]
    with pytest.raises(ValueError):
        load_attributes("name,age\na,1\n")
