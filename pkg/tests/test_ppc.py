import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentcss.css_data import CssTensor
from latentcss.model_core import LatentState
from latentcss.ppc import STATISTICS, css_statistics, network_statistics, ppc_run, replicate_css
from latentcss.sampler import ChainOutput

from conftest import random_css, random_state


def _flat_state(n, b0, K=1):
    return LatentState(beta=np.full((n, 1), b0), u=np.zeros((n, n, K)), v=np.zeros((n, n, K)),
                       eta=np.zeros((n, K)), zeta=np.zeros((n, K)), gamma=np.ones(n),
                       xi=np.ones(n), sigma_u2=1, sigma_v2=1, tau_u2=1, tau_v2=1, nu=[b0],
                       varsigma2=1, psi=0.5)


def _brute(A):
    n = A.shape[0]
    edges = [(i, k) for i in range(n) for k in range(n) if i != k and A[i, k]]
    density = len(edges) / (n * (n - 1))
    paths = closed = 0
    for i, k, m in itertools.permutations(range(n), 3):
        if A[i, k] and A[k, m]:
            paths += 1
            closed += int(A[i, m])
    trans = closed / paths if paths else math.nan
    out_deg = [sum(A[i, k] for k in range(n) if k != i) for i in range(n)]
    in_deg = [sum(A[k, i] for k in range(n) if k != i) for i in range(n)]
    x = np.array([out_deg[i] for i, _ in edges], float)
    y = np.array([in_deg[k] for _, k in edges], float)
    if len(edges) < 2 or x.std() == 0 or y.std() == 0:
        assort = math.nan
    else:
        assort = float(np.corrcoef(x, y)[0, 1])
    return density, trans, assort


def test_complete_graph():
    A = 1 - np.eye(5, dtype=int)
    d, t, a = network_statistics(A)
    assert d == 1.0 and t == 1.0
    assert math.isnan(a)                              # every degree equal


def test_empty_graph():
    d, t, a = network_statistics(np.zeros((4, 4)))
    assert d == 0.0 and math.isnan(t) and math.isnan(a)


def test_three_cycle():
    A = np.zeros((3, 3), int)
    A[0, 1] = A[1, 2] = A[2, 0] = 1
    d, t, _ = network_statistics(A)
    assert d == 0.5 and t == 0.0


def test_diagonal_ignored():
    A = np.zeros((3, 3), int)
    A[0, 1] = 1
    B = A.copy()
    np.fill_diagonal(B, 1)
    np.testing.assert_equal(network_statistics(A), network_statistics(B))


def test_rejects_non_square():
    with pytest.raises(ValueError):
        network_statistics(np.zeros((3, 4)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(3, 7), p=st.floats(0.1, 0.9))
def test_statistics_match_brute_force(seed, n, p):
    A = (np.random.default_rng(seed).random((n, n)) < p).astype(int)
    np.fill_diagonal(A, 0)
    np.testing.assert_allclose(network_statistics(A), _brute(A), atol=1e-12, equal_nan=True)


def test_css_statistics_is_slice_average(rng):
    Y = random_css(6, rng, 0.4)
    per = np.array([network_statistics(Y.slice(j)) for j in range(6)])
    np.testing.assert_allclose(css_statistics(Y), np.nanmean(per, axis=0), atol=1e-12)


def test_replicate_extremes(rng):
    Y = replicate_css(_flat_state(6, -10.0), None, rng)
    assert Y.values.sum() == 0
    Y = replicate_css(_flat_state(6, 10.0), None, rng)
    assert Y.values.sum() == Y.n_cells


def test_replicate_half_density():
    dens = [replicate_css(_flat_state(10, 0.0), None, seed).values.sum() / 900
            for seed in range(200)]
    assert all(0.4 <= d <= 0.6 for d in dens)


def test_replicate_deterministic_and_density(rng):
    s = random_state(5, 2, rng)
    a, b = replicate_css(s, None, 99), replicate_css(s, None, 99)
    assert a == b
    assert css_statistics(a)[0] == pytest.approx(a.values.sum() / a.n_cells, abs=1e-12)


def _chain(n, S, rng):
    return ChainOutput.from_states([random_state(n, 2, rng) for _ in range(S)])


def test_ppc_run_deterministic_and_shapes(rng):
    Y = random_css(5, rng)
    chain = _chain(5, 12, rng)
    a = ppc_run(chain, Y, None, 6, 3)
    b = ppc_run(chain, Y, None, 6, 3)
    assert a.to_csv() == b.to_csv()
    assert all(len(a.replicates[s]) == 6 for s in STATISTICS)
    assert list(a.sample_indices) == [0, 2, 4, 7, 9, 11]
    for p in a.p_values.values():
        assert math.isnan(p) or 0 <= p <= 1


def test_ppc_single_replicate(rng):
    Y = random_css(5, rng)
    rep = ppc_run(_chain(5, 3, rng), Y, None, 1, 0)
    for s in STATISTICS:
        # one replicate gives F in {0, 1}, hence p = 0
        p = rep.p_values[s]
        assert math.isnan(p) or p == 0.0
        assert len(rep.replicates[s]) == 1


def test_ppc_rejects_too_many(rng):
    with pytest.raises(ValueError):
        ppc_run(_chain(4, 3, rng), random_css(4, rng), None, 4, 0)


def test_ppc_empty_observed_sits_at_left_edge(rng):
    Y = CssTensor(np.zeros((5, 5, 5), dtype=np.int8))
    chain = ChainOutput.from_states([_flat_state(5, -1.0) for _ in range(20)])
    rep = ppc_run(chain, Y, None, 20, 1)
    assert rep.observed["density"] == 0.0
    assert rep.observed["density"] <= rep.replicates["density"].min()


def test_ppc_csv_headers(rng):
    rep = ppc_run(_chain(4, 5, rng), random_css(4, rng), None, 5, 0)
    assert rep.to_csv().splitlines()[0] == "statistic,replicate_index,value"
    assert len(rep.to_csv().splitlines()) == 1 + 15
    assert rep.observed_csv().splitlines()[0] == "statistic,value"
    assert rep.pvalues_csv().splitlines()[0] == "statistic,p_value"
